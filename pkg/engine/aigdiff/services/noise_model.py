"""
Categorical noise process.

Transitions mix the identity with the empirical marginal:
Q_t = α_t I + (1 - α_t) 1 m, and the cumulative kernel keeps the same form
with ᾱ_t = ∏_{s<=t} α_s. Each node and edge runs on its own local timestep
derived from the global timestep and the node's normalized level.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, Iterable, Optional, Tuple, Union

import numpy as np

from aigdiff.exceptions import DegenerateScheduleError, PosteriorError, ShapeMismatchError
from aigdiff.models.dag import K_E, K_X, Dag

logger = logging.getLogger(__name__)

COSINE_OFFSET = 0.008
ALPHA_BAR_FLOOR = 1e-8
POSTERIOR_TOLERANCE = 1e-9

ArrayLike = Union[int, float, np.ndarray]


class Mode(str, Enum):
    """Which end of the graph is generated first."""

    BOTTOM_UP = "bottom-up"
    TOP_DOWN = "top-down"


class Target(str, Enum):
    NODE = "node"
    EDGE = "edge"


# ===== Schedule =====


def cosine_alpha_bar(t: int, T: int) -> float:
    """Cosine ᾱ_t, clipped to (1e-8, 1]."""
    if not 0 <= t <= T:
        raise ValueError(f"t={t} outside [0, {T}]")
    s = COSINE_OFFSET
    f_t = math.cos(((t / T + s) / (1 + s)) * math.pi / 2) ** 2
    f_0 = math.cos((s / (1 + s)) * math.pi / 2) ** 2
    return float(min(1.0, max(ALPHA_BAR_FLOOR, f_t / f_0)))


def transition_matrix(alpha: float, marginal: np.ndarray) -> np.ndarray:
    """Q = α I + (1 - α) 1 mᵀ; every row sums to 1."""
    m = np.asarray(marginal, dtype=np.float64)
    return alpha * np.eye(m.shape[0]) + (1.0 - alpha) * np.ones((m.shape[0], 1)) * m[None, :]


def _check_marginal(name: str, m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 1 or (m < 0).any() or abs(m.sum() - 1.0) > 1e-9:
        raise ShapeMismatchError(f"{name} must be a probability vector, got {m}")
    return m


@dataclass(frozen=True, eq=False)
class NoiseModel:
    """
    Immutable noise process shared by training and sampling.

    alpha_bars holds ᾱ_0..ᾱ_T with ᾱ_0 = 1.
    """

    T: int
    alpha_bars: np.ndarray
    m_x: np.ndarray
    m_e: np.ndarray
    beta: float = 0.0
    mode: Mode = Mode.BOTTOM_UP
    node_diffusion: bool = False

    def __post_init__(self):
        if self.T < 1:
            raise ValueError(f"T must be >= 1, got {self.T}")
        bars = np.asarray(self.alpha_bars, dtype=np.float64)
        if bars.shape != (self.T + 1,):
            raise ShapeMismatchError(f"alpha_bars must have length T+1={self.T + 1}")
        alphas = bars[1:] / bars[:-1]
        if not ((alphas > 0) & (alphas <= 1.0 + 1e-12)).all():
            raise ValueError("every α_t must lie in (0, 1]")
        bars = bars.copy()
        bars.setflags(write=False)
        object.__setattr__(self, "alpha_bars", bars)
        object.__setattr__(self, "m_x", _check_marginal("m_x", self.m_x))
        object.__setattr__(self, "m_e", _check_marginal("m_e", self.m_e))
        object.__setattr__(self, "mode", Mode(self.mode))
        object.__setattr__(self, "beta", float(self.beta))

    # ------------------------------------------------------------------
    # Construction
    # ------------------------------------------------------------------
    @classmethod
    def cosine(
        cls,
        T: int,
        m_x: np.ndarray,
        m_e: np.ndarray,
        beta: float = 0.0,
        mode: Mode = Mode.BOTTOM_UP,
        node_diffusion: bool = False,
    ) -> "NoiseModel":
        bars = np.asarray([cosine_alpha_bar(t, T) for t in range(T + 1)])
        return cls(T, bars, m_x, m_e, beta, mode, node_diffusion)

    @classmethod
    def from_alphas(
        cls,
        alphas: Iterable[float],
        m_x: np.ndarray,
        m_e: np.ndarray,
        beta: float = 0.0,
        mode: Mode = Mode.BOTTOM_UP,
        node_diffusion: bool = False,
    ) -> "NoiseModel":
        """Explicit α_1..α_T schedule."""
        alphas = np.asarray(list(alphas), dtype=np.float64)
        bars = np.concatenate([[1.0], np.cumprod(alphas)])
        return cls(len(alphas), bars, m_x, m_e, beta, mode, node_diffusion)

    def with_schedule(
        self, beta: Optional[float] = None, mode: Optional[Mode] = None
    ) -> "NoiseModel":
        return NoiseModel(
            self.T,
            self.alpha_bars,
            self.m_x,
            self.m_e,
            self.beta if beta is None else beta,
            self.mode if mode is None else mode,
            self.node_diffusion,
        )

    # ------------------------------------------------------------------
    # Views
    # ------------------------------------------------------------------
    @property
    def alphas(self) -> np.ndarray:
        """α_1..α_T."""
        return self.alpha_bars[1:] / self.alpha_bars[:-1]

    def marginal(self, which: Target) -> np.ndarray:
        return self.m_x if Target(which) == Target.NODE else self.m_e

    def one_step(self, t: int, which: Target) -> np.ndarray:
        """Q^t (t >= 1)."""
        if not 1 <= t <= self.T:
            raise ValueError(f"t={t} outside [1, {self.T}]")
        return transition_matrix(float(self.alphas[t - 1]), self.marginal(which))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "T": self.T,
            "alpha_bars": [float(v) for v in self.alpha_bars],
            "m_x": [float(v) for v in self.m_x],
            "m_e": [float(v) for v in self.m_e],
            "beta": self.beta,
            "mode": self.mode.value,
            "node_diffusion": self.node_diffusion,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "NoiseModel":
        return cls(
            T=int(data["T"]),
            alpha_bars=np.asarray(data["alpha_bars"], dtype=np.float64),
            m_x=np.asarray(data["m_x"], dtype=np.float64),
            m_e=np.asarray(data["m_e"], dtype=np.float64),
            beta=float(data.get("beta", 0.0)),
            mode=Mode(data.get("mode", Mode.BOTTOM_UP.value)),
            node_diffusion=bool(data.get("node_diffusion", False)),
        )


def cumulative_transition(t: int, model: NoiseModel, which: Target) -> np.ndarray:
    """Q̄^t = Q^1 ... Q^t in closed form; identity at t = 0."""
    if not 0 <= t <= model.T:
        raise ValueError(f"t={t} outside [0, {model.T}]")
    return transition_matrix(float(model.alpha_bars[t]), model.marginal(which))


def estimate_marginals(dags: Iterable[Dag]) -> Tuple[np.ndarray, np.ndarray]:
    """Empirical node-type and edge-type frequencies (edges over ordered pairs i != j)."""
    node_counts = np.zeros(K_X, dtype=np.float64)
    edge_counts = np.zeros(K_E, dtype=np.float64)
    for dag in dags:
        node_counts += np.bincount(dag.node_index, minlength=K_X)[:K_X]
        off_diag = ~np.eye(dag.n, dtype=bool)
        edge_counts += np.bincount(dag.edge_index[off_diag], minlength=K_E)[:K_E]
    if node_counts.sum() == 0:
        raise ShapeMismatchError("Cannot estimate marginals from an empty dataset")
    if edge_counts.sum() == 0:
        edge_counts[0] = 1.0
    return node_counts / node_counts.sum(), edge_counts / edge_counts.sum()


# ===== Local timesteps =====


def _level_offset(levels: np.ndarray, model: NoiseModel) -> np.ndarray:
    if model.mode == Mode.BOTTOM_UP:
        return model.beta * (1.0 - levels)
    return model.beta * levels


def local_timesteps(t: int, levels: ArrayLike, model: NoiseModel) -> np.ndarray:
    """
    τ = clip(T / (T - off) · (t - off), 0, T), rounded half-up.

    off = β(1 - l) bottom-up, β·l top-down.

    Raises:
        DegenerateScheduleError: If off >= T for some level
    """
    if not 0 <= t <= model.T:
        raise ValueError(f"t={t} outside [0, {model.T}]")
    levels = np.asarray(levels, dtype=np.float64)
    offset = _level_offset(levels, model)
    T = float(model.T)
    if (offset >= T).any():
        raise DegenerateScheduleError(
            f"Level offset {float(offset.max())} >= T={model.T} (beta={model.beta})"
        )
    raw = T / (T - offset) * (t - offset)
    tau = np.floor(np.clip(raw, 0.0, T) + 0.5)
    return tau.astype(np.int64)


def local_timestep(t: int, level: float, model: NoiseModel) -> int:
    return int(local_timesteps(t, np.asarray([level]), model)[0])


def edge_timesteps(node_tau: np.ndarray) -> np.ndarray:
    """Edge (i, j) follows its parent j."""
    node_tau = np.asarray(node_tau)
    return np.broadcast_to(node_tau[None, :], (node_tau.shape[0], node_tau.shape[0])).copy()


# ===== Sampling helpers =====


def sample_categorical(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Draw one index per distribution along the last axis."""
    probs = np.asarray(probs, dtype=np.float64)
    cdf = np.cumsum(probs, axis=-1)
    u = rng.random(probs.shape[:-1]) * cdf[..., -1]
    idx = (cdf <= u[..., None]).sum(axis=-1)
    return np.minimum(idx, probs.shape[-1] - 1).astype(np.int64)


def cumulative_rows(states: np.ndarray, alpha_bar: np.ndarray, marginal: np.ndarray) -> np.ndarray:
    """Rows Q̄[x] for per-element states and per-element ᾱ."""
    k = marginal.shape[0]
    onehot = np.eye(k)[states]
    ab = np.asarray(alpha_bar, dtype=np.float64)[..., None]
    return ab * onehot + (1.0 - ab) * marginal


def corrupt(clean: Dag, t: int, model: NoiseModel, rng: np.random.Generator) -> Dag:
    """
    Sample G^t ~ q(. | G) with per-element local timesteps.

    Self-edges stay absent. Node types are only corrupted when node
    diffusion is enabled.
    """
    tau_nodes = local_timesteps(t, clean.normalized_levels(), model)
    tau_edges = edge_timesteps(tau_nodes)

    edge_probs = cumulative_rows(clean.edge_index, model.alpha_bars[tau_edges], model.m_e)
    edges = sample_categorical(edge_probs, rng)
    np.fill_diagonal(edges, 0)
    noisy = clean.with_edges(edges)

    if model.node_diffusion:
        node_probs = cumulative_rows(clean.node_index, model.alpha_bars[tau_nodes], model.m_x)
        noisy = noisy.with_nodes(sample_categorical(node_probs, rng))
    return noisy


# ===== Reverse posterior =====


def posterior_step(
    pred: np.ndarray,
    current: np.ndarray,
    tau_t: ArrayLike,
    tau_prev: ArrayLike,
    model: NoiseModel,
    which: Target = Target.EDGE,
) -> np.ndarray:
    """
    p(x^{τ_prev} | x^{τ_t}) = Σ_k p(x^{τ_prev} | x = k, x^{τ_t}) · pred[k].

    Args:
        pred: (..., k) predicted clean distributions
        current: (...) current category indices
        tau_t: Local timesteps now (broadcast against current)
        tau_prev: Local timesteps after the step, <= tau_t
        model: Noise process
        which: Node or edge marginal

    Returns:
        (..., k) distributions; point masses where tau_prev == tau_t

    Raises:
        PosteriorError: tau_prev > tau_t, a zero conditioning denominator
            under positive predicted mass, or a sum off by more than 1e-9
    """
    m = model.marginal(which)
    k = m.shape[0]
    pred = np.asarray(pred, dtype=np.float64)
    current = np.asarray(current, dtype=np.int64)
    if pred.shape != current.shape + (k,):
        raise ShapeMismatchError(f"pred shape {pred.shape} vs state shape {current.shape} + ({k},)")
    pred = pred / np.maximum(pred.sum(axis=-1, keepdims=True), np.finfo(np.float64).tiny)
    tau_t = np.broadcast_to(np.asarray(tau_t, dtype=np.int64), current.shape)
    tau_prev = np.broadcast_to(np.asarray(tau_prev, dtype=np.int64), current.shape)

    backwards = tau_prev > tau_t
    if backwards.any():
        element = int(np.flatnonzero(backwards.ravel())[0])
        raise PosteriorError("tau_prev exceeds tau_t", element)

    ab_t = model.alpha_bars[tau_t]
    ab_p = model.alpha_bars[tau_prev]
    a_step = ab_t / ab_p

    eye = np.eye(k)
    x_onehot = eye[current]  # (..., k)
    m_cur = m[current]  # (...)

    # q(x^{τ_prev} = x' | x = k): (..., k, k')
    q_prev = ab_p[..., None, None] * eye + (1.0 - ab_p)[..., None, None] * m
    # q(x^{τ_t} | x^{τ_prev} = x'): (..., k')
    step = a_step[..., None] * x_onehot + (1.0 - a_step)[..., None] * m_cur[..., None]
    # q(x^{τ_t} | x = k): (..., k)
    denom = ab_t[..., None] * x_onehot + (1.0 - ab_t)[..., None] * m_cur[..., None]

    live = pred > 0
    bad = live & (denom <= 0)
    if bad.any():
        element = int(np.flatnonzero(bad.any(axis=-1).ravel())[0])
        raise PosteriorError("zero-probability conditioning denominator", element)

    weight = np.where(live, pred / np.where(denom > 0, denom, 1.0), 0.0)
    out = np.einsum("...k,...kj->...j", weight, q_prev) * step

    out = np.where((tau_prev == tau_t)[..., None], x_onehot, out)

    totals = out.sum(axis=-1)
    off = np.abs(totals - 1.0) > POSTERIOR_TOLERANCE
    if off.any():
        element = int(np.flatnonzero(off.ravel())[0])
        raise PosteriorError(
            f"posterior sums to {float(totals.ravel()[element])}, expected 1", element
        )
    return out / totals[..., None]


def initial_state(
    node_types: np.ndarray,
    levels: np.ndarray,
    model: NoiseModel,
    rng: np.random.Generator,
) -> Dag:
    """G^T drawn from the marginals; node types kept unless node diffusion is on."""
    n = int(np.asarray(levels).shape[0])
    edges = sample_categorical(np.broadcast_to(model.m_e, (n, n, model.m_e.shape[0])), rng)
    np.fill_diagonal(edges, 0)
    nodes = np.asarray(node_types, dtype=np.int64)
    if model.node_diffusion:
        nodes = sample_categorical(np.broadcast_to(model.m_x, (n, model.m_x.shape[0])), rng)
    return Dag.from_indices(nodes, edges, levels)

