"""
Unit tests for services/noise_model.py

Tests cover:
- Cosine schedule and transition matrices
- Closed-form cumulative kernels
- Local timestep map
- Forward corruption
- Reverse posterior
"""

import numpy as np
import pytest

from aigdiff.exceptions import DegenerateScheduleError, PosteriorError, ShapeMismatchError
from aigdiff.models.dag import Dag
from aigdiff.services.noise_model import (
    Mode,
    NoiseModel,
    Target,
    corrupt,
    cosine_alpha_bar,
    cumulative_transition,
    edge_timesteps,
    estimate_marginals,
    initial_state,
    local_timestep,
    local_timesteps,
    posterior_step,
    sample_categorical,
    transition_matrix,
)
from aigdiff.utils.oracles import brute_force_posterior, explicit_cumulative

M3 = np.array([0.2, 0.5, 0.3])
M_EDGE = np.array([0.7, 0.2, 0.1])


@pytest.fixture
def long_model():
    return NoiseModel.cosine(500, M3, M_EDGE, beta=32)


# ===== SCHEDULE TESTS =====


def test_cosine_boundaries():
    """ᾱ_0 = 1 and ᾱ_T is at the floor region"""
    assert cosine_alpha_bar(0, 100) == 1.0
    assert cosine_alpha_bar(100, 100) < 1e-3
    with pytest.raises(ValueError):
        cosine_alpha_bar(101, 100)


def test_cosine_is_decreasing(long_model):
    """ᾱ_t decreases and every α_t lies in (0, 1]"""
    assert (np.diff(long_model.alpha_bars) < 0).all()
    assert ((long_model.alphas > 0) & (long_model.alphas <= 1)).all()


def test_transition_rows_sum_to_one():
    """Q = αI + (1-α)1m is row-stochastic"""
    q = transition_matrix(0.3, M3)
    assert np.allclose(q.sum(axis=1), 1.0)
    assert q[0, 0] == pytest.approx(0.3 + 0.7 * 0.2)
    assert q[0, 1] == pytest.approx(0.7 * 0.5)


def test_from_alphas_and_dict_round_trip():
    """Explicit schedules survive serialization"""
    model = NoiseModel.from_alphas([0.9, 0.8, 0.5], M3, M_EDGE, beta=1.0, mode=Mode.TOP_DOWN)
    assert model.T == 3
    assert np.allclose(model.alpha_bars, [1.0, 0.9, 0.72, 0.36])
    again = NoiseModel.from_dict(model.to_dict())
    assert np.array_equal(again.alpha_bars, model.alpha_bars)
    assert again.mode == Mode.TOP_DOWN and again.beta == 1.0


def test_invalid_marginal_rejected():
    """Marginals must be probability vectors"""
    with pytest.raises(ShapeMismatchError):
        NoiseModel.cosine(10, np.array([0.5, 0.6, 0.1]), M_EDGE)


def test_invalid_horizon_rejected():
    """T must be positive"""
    with pytest.raises(ValueError):
        NoiseModel.from_alphas([], M3, M_EDGE)


# ===== CUMULATIVE KERNEL TESTS =====


@pytest.mark.parametrize("which", [Target.NODE, Target.EDGE])
@pytest.mark.parametrize("t", [0, 1, 10, 100, 500])
def test_closed_form_matches_product(long_model, which, t):
    """Q̄^t equals the explicit product of one-step matrices"""
    assert np.abs(
        explicit_cumulative(t, long_model, which) - cumulative_transition(t, long_model, which)
    ).max() < 1e-10


def test_cumulative_identity_at_zero(long_model):
    """Q̄^0 = I"""
    assert np.allclose(cumulative_transition(0, long_model, Target.EDGE), np.eye(3))


def test_estimate_marginals(circuits):
    """Marginals are probability vectors and ignore self-pairs"""
    m_x, m_e = estimate_marginals(dag for dag, _ in circuits)
    assert m_x.sum() == pytest.approx(1.0) and m_e.sum() == pytest.approx(1.0)
    n_pairs = sum(dag.n * (dag.n - 1) for dag, _ in circuits)
    n_edges = sum(len(dag.edge_list()) for dag, _ in circuits)
    assert m_e[0] == pytest.approx(1 - n_edges / n_pairs)


# ===== LOCAL TIMESTEP TESTS =====


def test_local_timestep_boundaries(long_model):
    """τ(0, l) = 0 and τ(T, l) = T for every level"""
    grid = np.linspace(0, 1, 11)
    assert (local_timesteps(0, grid, long_model) == 0).all()
    assert (local_timesteps(long_model.T, grid, long_model) == long_model.T).all()


def test_local_timesteps_monotone(long_model):
    """τ never decreases in t and is ordered by level"""
    grid = np.linspace(0, 1, 21)
    table = np.stack([local_timesteps(t, grid, long_model) for t in range(long_model.T + 1)])
    assert (np.diff(table, axis=0) >= 0).all()
    assert (np.diff(table, axis=1) >= 0).all()


def test_top_down_reverses_order(long_model):
    """Top-down noising favours high levels"""
    top_down = long_model.with_schedule(mode=Mode.TOP_DOWN)
    grid = np.linspace(0, 1, 21)
    table = np.stack([local_timesteps(t, grid, top_down) for t in range(top_down.T + 1)])
    assert (np.diff(table, axis=1) <= 0).all()


def test_beta_zero_is_global(long_model):
    """Without offset every element follows t"""
    flat = long_model.with_schedule(beta=0.0)
    assert (local_timesteps(123, np.linspace(0, 1, 7), flat) == 123).all()


def test_local_timestep_value():
    """T=10, β=5, bottom level at t=8: 10/5·(8-5) = 6; top level keeps t"""
    model = NoiseModel.cosine(10, M3, M_EDGE, beta=5.0)
    assert local_timestep(8, 0.0, model) == 6
    assert local_timestep(8, 1.0, model) == 8
    assert local_timestep(3, 0.0, model) == 0


def test_local_timestep_rounds_half_up():
    """Ties round up: off = 6 gives 2.5 at t = 7 and 7.5 at t = 9"""
    model = NoiseModel.cosine(10, M3, M_EDGE, beta=6.0)
    assert local_timestep(7, 0.0, model) == 3
    assert local_timestep(9, 0.0, model) == 8


def test_degenerate_schedule():
    """β >= T makes the bottom level undefined"""
    model = NoiseModel.cosine(10, M3, M_EDGE, beta=10.0)
    with pytest.raises(DegenerateScheduleError):
        local_timesteps(5, np.array([0.0, 1.0]), model)


def test_edge_timesteps_follow_parent():
    """Column j carries the parent's τ"""
    tau = edge_timesteps(np.array([1, 5, 9]))
    assert tau.tolist() == [[1, 5, 9], [1, 5, 9], [1, 5, 9]]


# ===== CORRUPTION TESTS =====


def test_sample_categorical_frequencies(rng):
    """Draws follow the given probabilities"""
    probs = np.broadcast_to(np.array([0.1, 0.6, 0.3]), (20000, 3))
    draws = sample_categorical(probs, rng)
    freq = np.bincount(draws, minlength=3) / draws.size
    assert np.allclose(freq, [0.1, 0.6, 0.3], atol=0.015)


def test_corrupt_keeps_self_edges_absent(circuits, noise, rng):
    """Diagonal entries never receive an edge"""
    for dag, _ in circuits:
        for t in (1, noise.T // 2, noise.T):
            noisy = corrupt(dag, t, noise, rng)
            assert not np.diag(noisy.edge_index).any()
            assert np.array_equal(noisy.node_index, dag.node_index)
            assert np.array_equal(noisy.levels, dag.levels)


def test_corrupt_at_zero_is_identity(circuits, noise, rng):
    """t = 0 leaves the graph untouched"""
    for dag, _ in circuits:
        assert corrupt(dag, 0, noise, rng) == dag


def test_corrupt_node_diffusion_changes_types(circuits, rng):
    """With node diffusion on, types are resampled at t = T"""
    m_x, m_e = estimate_marginals(dag for dag, _ in circuits)
    model = NoiseModel.cosine(10, m_x, m_e, node_diffusion=True)
    changed = 0
    for dag, _ in circuits:
        changed += int((corrupt(dag, 10, model, rng).node_index != dag.node_index).sum())
    assert changed > 0


def test_corrupt_edge_frequency_matches_kernel(rng):
    """Edge states at τ follow Q̄^τ rows"""
    model = NoiseModel.cosine(10, M3, M_EDGE)
    n = 60
    edges = np.zeros((n, n), dtype=np.int64)
    edges[np.triu_indices(n, 1)] = 1
    dag = Dag.from_indices(np.zeros(n, dtype=np.int64), edges, np.zeros(n))
    noisy = corrupt(dag, 5, model, rng)
    upper = noisy.edge_index[np.triu_indices(n, 1)]
    freq = np.bincount(upper, minlength=3) / upper.size
    expected = cumulative_transition(5, model, Target.EDGE)[1]
    assert np.allclose(freq, expected, atol=0.03)


def test_initial_state_shapes(noise, rng):
    """G^T keeps node types and levels, with an empty diagonal"""
    types = np.array([0, 0, 1, 2])
    levels = np.array([0, 0, 1, 2])
    start = initial_state(types, levels, noise, rng)
    assert start.node_index.tolist() == types.tolist()
    assert not np.diag(start.edge_index).any()


# ===== POSTERIOR TESTS =====


@pytest.mark.parametrize("marginal", [np.array([0.7, 0.3]), np.array([0.6, 0.3, 0.1])])
def test_posterior_matches_enumeration(marginal):
    """Vectorized posterior equals brute-force chain enumeration"""
    rng = np.random.default_rng(11)
    k = marginal.shape[0]
    model = NoiseModel.cosine(500, marginal, marginal)
    for tau_t in range(0, 6):
        for tau_prev in range(0, tau_t + 1):
            for current in range(k):
                pred = rng.dirichlet(np.ones(k))
                fast = posterior_step(
                    pred[None], np.array([current]), tau_t, tau_prev, model, Target.EDGE
                )[0]
                slow = brute_force_posterior(pred, current, tau_t, tau_prev, model, Target.EDGE)
                assert np.abs(fast - slow).max() < 1e-12


def test_posterior_point_mass_when_frozen(long_model):
    """τ_prev == τ_t keeps the current state"""
    out = posterior_step(np.full((2, 3), 1 / 3), np.array([2, 0]), 7, 7, long_model)
    assert out.tolist() == [[0, 0, 1], [1, 0, 0]]


def test_posterior_last_step_returns_prediction(long_model):
    """The final step to τ = 0 still yields a distribution"""
    pred = np.array([[0.2, 0.5, 0.3]])
    out = posterior_step(pred, np.array([1]), 1, 0, long_model)
    assert out.sum() == pytest.approx(1.0)
    assert (out >= 0).all()


def test_posterior_rejects_backwards_steps(long_model):
    """τ_prev > τ_t is an error naming the element"""
    with pytest.raises(PosteriorError) as info:
        posterior_step(
            np.full((3, 3), 1 / 3), np.zeros(3, dtype=int), [5, 5, 2], [4, 4, 3], long_model
        )
    assert info.value.element == 2


def test_posterior_zero_denominator():
    """Positive mass on a clean state that cannot reach the current state fails"""
    model = NoiseModel.cosine(10, np.array([1.0, 0.0]), np.array([1.0, 0.0]))
    with pytest.raises(PosteriorError):
        posterior_step(np.array([[0.5, 0.5]]), np.array([1]), 3, 2, model)


def test_posterior_shape_mismatch(long_model):
    """pred must have one distribution per element"""
    with pytest.raises(ShapeMismatchError):
        posterior_step(np.ones((2, 2)), np.zeros(2, dtype=int), 3, 2, long_model)
