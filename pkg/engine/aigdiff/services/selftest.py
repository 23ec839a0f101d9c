"""
Self-test Service

In-process oracle and property suites runnable without pytest
(`python -m aigdiff selftest`). Each suite raises SelfTestFailure on the
first violated check; run_selftest collects one result per suite.
"""

import logging
import time
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch

from aigdiff.models.aig import (
    Aig,
    AndGate,
    OutputWire,
    aig_to_dag,
    canonicalize,
    simulate,
    simulate_recursive,
)
from aigdiff.models.configs import ModelConfig, TrainConfig
from aigdiff.models.dag import NODE_OUTPUT, Dag, Permutation
from aigdiff.services.aig_parser import parse_dag_to_aig
from aigdiff.services.denoiser import GraphTransformer, gradients
from aigdiff.services.level_structure import LevelStructureStats, sample_level_structure
from aigdiff.services.noise_model import (
    Mode,
    NoiseModel,
    Target,
    cumulative_transition,
    estimate_marginals,
    local_timesteps,
    posterior_step,
)
from aigdiff.services.sampler import OracleDenoiser, reverse_sample
from aigdiff.services.trainer import PreparedItem, compute_losses, permute_item, prepare_item
from aigdiff.utils.aig_generator import random_aig, random_dag
from aigdiff.utils.oracles import brute_force_posterior, explicit_cumulative

logger = logging.getLogger(__name__)


class SelfTestFailure(AssertionError):
    pass


@dataclass
class SuiteResult:
    name: str
    passed: bool
    seconds: float
    detail: str = ""


def _check(condition: bool, message: str) -> None:
    if not condition:
        raise SelfTestFailure(message)


# ===== Shared fixtures =====


def tiny_model_config() -> ModelConfig:
    return ModelConfig(layers=2, hidden_x=8, hidden_e=8, hidden_y=8, heads=2, time_dim=4)


def tiny_model(seed: int = 0) -> GraphTransformer:
    torch.manual_seed(seed)
    return GraphTransformer(tiny_model_config()).double()


def tiny_train_config(**overrides) -> TrainConfig:
    values = dict(T=10, beta=5.0, layers=2, hidden=8, hidden_e=8, hidden_y=8, heads=2, time_dim=4)
    values.update(overrides)
    return TrainConfig(**values)


def random_circuits(
    count: int, rng: np.random.Generator, n_in: int = 3, n_out: int = 1, max_gates: int = 10
) -> List[Tuple[Dag, object]]:
    """(Dag, TruthTable) pairs of canonical random AIGs."""
    pairs = []
    for _ in range(count):
        aig, tt = random_aig(n_in, n_out, max_gates, rng)
        pairs.append((aig_to_dag(canonicalize(aig)), tt))
    return pairs


def noise_for(graphs: Sequence[Dag], T: int = 10, beta: float = 5.0) -> NoiseModel:
    m_x, m_e = estimate_marginals(graphs)
    return NoiseModel.cosine(T, m_x, m_e, beta=beta)


def prepared_items(
    count: int, rng: np.random.Generator, config: TrainConfig
) -> Tuple[List[PreparedItem], NoiseModel]:
    pairs = random_circuits(count, rng)
    noise = noise_for([dag for dag, _ in pairs], config.T, config.beta)
    items = [
        prepare_item(dag, tt, int(rng.integers(1, noise.T + 1)), noise, rng) for dag, tt in pairs
    ]
    return items, noise


def eight_node_circuits() -> List[Tuple[Dag, object]]:
    """Two 3-input, 4-AND, 1-output circuits (n = 8 nodes each)."""
    aigs = [
        Aig(
            3,
            1,
            (
                AndGate(0, False, 1, False),
                AndGate(1, True, 2, False),
                AndGate(3, False, 4, True),
                AndGate(5, False, 0, True),
            ),
            (OutputWire(6, True),),
        ),
        Aig(
            3,
            1,
            (
                AndGate(0, True, 2, True),
                AndGate(0, False, 1, True),
                AndGate(3, True, 4, False),
                AndGate(2, False, 5, False),
            ),
            (OutputWire(6, False),),
        ),
    ]
    return [(aig_to_dag(canonicalize(aig)), simulate(aig)) for aig in aigs]


def gradient_check_setup(
    rng: np.random.Generator,
) -> Tuple[GraphTransformer, List[PreparedItem], NoiseModel, TrainConfig]:
    """Two layers of width 16 over n = 8 circuits, in float64."""
    config = tiny_train_config(hidden=16, hidden_e=16, hidden_y=16)
    torch.manual_seed(1)
    model = GraphTransformer(config.to_model_config()).double()
    pairs = eight_node_circuits()
    noise = noise_for([dag for dag, _ in pairs], config.T, config.beta)
    items = [
        prepare_item(dag, tt, int(rng.integers(1, noise.T + 1)), noise, rng) for dag, tt in pairs
    ]
    return model, items, noise, config


    return items, noise


# ===== Suites =====


def suite_diffusion() -> None:
    """Closed-form cumulative transitions against explicit products (T=500, k=3)."""
    noise = NoiseModel.cosine(500, np.array([0.2, 0.5, 0.3]), np.array([0.7, 0.2, 0.1]))
    for which in (Target.NODE, Target.EDGE):
        product = np.eye(3)
        for t in range(1, noise.T + 1):
            product = product @ noise.one_step(t, which)
            if t in (1, 10, 100, 250, 500):
                error = np.abs(product - cumulative_transition(t, noise, which)).max()
                _check(error < 1e-10, f"Q̄^{t} ({which.value}) deviates by {error:.3e}")
        explicit = explicit_cumulative(37, noise, which)
        error = np.abs(explicit - cumulative_transition(37, noise, which))
        _check(error.max() < 1e-10, f"explicit product at t=37 deviates by {error.max():.3e}")


def suite_posterior() -> None:
    """posterior_step against chain enumeration for k in {2, 3}, τ_t <= 6."""
    rng = np.random.default_rng(11)
    for marginal in (np.array([0.7, 0.3]), np.array([0.6, 0.3, 0.1])):
        k = marginal.shape[0]
        noise = NoiseModel.cosine(500, marginal, marginal)
        for tau_t in range(0, 7):
            for tau_prev in range(0, tau_t + 1):
                for current in range(k):
                    pred = rng.dirichlet(np.ones(k))
                    fast = posterior_step(
                        pred[None], np.array([current]), tau_t, tau_prev, noise, Target.EDGE
                    )[0]
                    slow = brute_force_posterior(pred, current, tau_t, tau_prev, noise, Target.EDGE)
                    error = np.abs(fast - slow).max()
                    _check(
                        error < 1e-12,
                        f"k={k} τ_t={tau_t} τ_prev={tau_prev} x={current}: error {error:.3e}",
                    )


def suite_schedule() -> None:
    """Boundary, monotonicity and level-ordering laws of the local timestep map."""
    noise = NoiseModel.cosine(500, np.array([0.2, 0.5, 0.3]), np.array([0.7, 0.2, 0.1]), beta=32)
    grid = np.linspace(0.0, 1.0, 21)
    table = np.stack([local_timesteps(t, grid, noise) for t in range(noise.T + 1)])
    _check((table[0] == 0).all(), "τ(0, l) != 0")
    _check((table[-1] == noise.T).all(), "τ(T, l) != T")
    _check((np.diff(table, axis=0) >= 0).all(), "τ not monotone in t")
    _check((np.diff(table, axis=1) >= 0).all(), "τ not ordered by level (bottom-up)")
    top_down = noise.with_schedule(mode=Mode.TOP_DOWN)
    reversed_table = np.stack([local_timesteps(t, grid, top_down) for t in range(noise.T + 1)])
    _check((np.diff(reversed_table, axis=1) <= 0).all(), "τ not ordered by level (top-down)")


def suite_simulator() -> None:
    """Vectorized and recursive simulators agree bit for bit on 1000 random AIGs."""
    rng = np.random.default_rng(5)
    for index in range(1000):
        n_in = int(rng.integers(1, 5))
        n_out = int(rng.integers(1, 3))
        aig, _ = random_aig(n_in, n_out, n_in + n_out + int(rng.integers(0, 12)), rng)
        _check(simulate(aig) == simulate_recursive(aig), f"simulators disagree on AIG {index}")


def suite_parser() -> None:
    """Parsing arbitrary DAGs always yields a simulatable AIG."""
    rng = np.random.default_rng(9)
    for index in range(1000):
        dag = random_dag(int(rng.integers(2, 13)), rng)
        aig = parse_dag_to_aig(dag, rng)
        aig.validate()
        simulate(aig)
        _check(
            aig.n_out == int((dag.node_index == NODE_OUTPUT).sum()),
            f"output count changed on DAG {index}",
        )


def suite_oracle() -> None:
    """A ground-truth denoiser reconstructs its target exactly."""
    rng = np.random.default_rng(3)
    for index, (dag, tt) in enumerate(random_circuits(50, rng)):
        noise = noise_for([dag], T=20, beta=8.0)
        stats = LevelStructureStats.estimate([dag])
        structure = sample_level_structure(stats, tt.n_in, tt.n_out, rng)
        sample = reverse_sample(OracleDenoiser(dag), tt, stats, noise, rng, structure=structure)
        _check(sample == dag, f"oracle reconstruction failed on case {index}")


def suite_equivariance() -> None:
    """Permuted inputs give permuted outputs and the same losses."""
    rng = np.random.default_rng(21)
    config = tiny_train_config()
    model = tiny_model(0)
    model.eval()
    items, noise = prepared_items(20, rng, config)
    with torch.no_grad():
        for index, item in enumerate(items):
            ((p_x, p_e),) = model.forward_graphs([item.noisy], [item.cond], [item.t], noise)
            _, base = compute_losses(model, [item], config, noise)
            for _ in range(5):
                sigma = Permutation.random(item.clean.n, rng)
                moved = permute_item(item, sigma)
                ((q_x, q_e),) = model.forward_graphs([moved.noisy], [moved.cond], [moved.t], noise)
                error = max(
                    float(np.abs(sigma.apply_nodes(p_x.numpy()) - q_x.numpy()).max()),
                    float(np.abs(sigma.apply_pairs(p_e.numpy()) - q_e.numpy()).max()),
                )
                _check(error < 1e-4, f"graph {index}: equivariance error {error:.3e}")
                _, other = compute_losses(model, [moved], config, noise)
                rel = abs(other.total - base.total) / max(abs(base.total), 1e-12)
                _check(rel < 1e-6, f"graph {index}: loss changed by {rel:.3e} relative")


def finite_difference_check(
    model: GraphTransformer,
    loss_fn: Callable[[], torch.Tensor],
    count: int,
    rng: np.random.Generator,
    eps: float = 1e-6,
) -> float:
    """Worst relative error between autograd and central differences over random entries."""
    params = [p for p in model.parameters()]
    grads = gradients(loss_fn(), params)
    sizes = np.array([p.numel() for p in params])
    worst = 0.0
    with torch.no_grad():
        for _ in range(count):
            which = int(rng.choice(len(params), p=sizes / sizes.sum()))
            flat = params[which].view(-1)
            pos = int(rng.integers(flat.numel()))
            original = float(flat[pos])
            flat[pos] = original + eps
            up = float(loss_fn())
            flat[pos] = original - eps
            down = float(loss_fn())
            flat[pos] = original
            numeric = (up - down) / (2 * eps)
            analytic = float(grads[which].view(-1)[pos])
            scale = max(abs(numeric), abs(analytic))
            error = abs(numeric - analytic) / scale if scale > 1e-6 else abs(numeric - analytic)
            worst = max(worst, error)
    return worst


def suite_gradient() -> None:
    """Autograd through the denoiser, soft simulation and BCE matches finite differences."""
    rng = np.random.default_rng(17)
    model, items, noise, config = gradient_check_setup(rng)

    def loss() -> torch.Tensor:
        total, _ = compute_losses(model, items, config, noise)
        return total

    worst = finite_difference_check(model, loss, 100, rng)
    _check(worst < 1e-3, f"finite-difference relative error {worst:.3e}")


SUITES: Dict[str, Callable[[], None]] = {
    "diffusion": suite_diffusion,
    "posterior": suite_posterior,
    "schedule": suite_schedule,
    "simulator": suite_simulator,
    "parser": suite_parser,
    "oracle": suite_oracle,
    "equivariance": suite_equivariance,
    "gradient": suite_gradient,
}


def run_selftest(names: Optional[Sequence[str]] = None) -> List[SuiteResult]:
    """
    Run the named suites (all when None).

    Raises:
        ValueError: On an unknown suite name
    """
    names = list(names) if names else list(SUITES)
    unknown = [n for n in names if n not in SUITES]
    if unknown:
        raise ValueError(f"Unknown selftest suite(s): {', '.join(unknown)}")

    results = []
    for name in names:
        started = time.perf_counter()
        try:
            SUITES[name]()
            result = SuiteResult(name, True, time.perf_counter() - started)
        except SelfTestFailure as exc:
            result = SuiteResult(name, False, time.perf_counter() - started, str(exc))
        level = logging.INFO if result.passed else logging.ERROR
        logger.log(
            level,
            f"[SelfTest] {name}: {'PASS' if result.passed else 'FAIL'} "
            f"({result.seconds:.2f}s) {result.detail}".rstrip(),
        )
        results.append(result)
    return results
