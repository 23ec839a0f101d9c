"""
Level-scheduled reverse sampling.
"""

import logging
from typing import List, Optional, Protocol, Tuple

import numpy as np

from aigdiff.models.aig import NodeRoster, TruthTable
from aigdiff.models.dag import Dag, one_hot
from aigdiff.services.condition_encoder import encode_condition
from aigdiff.services.level_structure import (
    LevelAssignment,
    LevelStructureStats,
    sample_level_structure,
)
from aigdiff.services.noise_model import (
    NoiseModel,
    Target,
    edge_timesteps,
    initial_state,
    local_timesteps,
    posterior_step,
    sample_categorical,
)

logger = logging.getLogger(__name__)


class Denoiser(Protocol):
    """Anything that maps a noisy graph to clean-type distributions."""

    def predict(
        self,
        noisy: Dag,
        cond: Optional[np.ndarray],
        t: int,
        noise: NoiseModel,
    ) -> Tuple[np.ndarray, np.ndarray]:
        """Return (pX: n x k_x, pE: n x n x k_e) as float64 arrays."""
        ...


class MarginalDenoiser:
    """Predicts the type marginals everywhere; random-wiring baseline."""

    def predict(
        self,
        noisy: Dag,
        cond: Optional[np.ndarray],
        t: int,
        noise: NoiseModel,
    ) -> Tuple[np.ndarray, np.ndarray]:
        n = noisy.n
        p_x = np.broadcast_to(noise.m_x, (n, noise.m_x.shape[0])).copy()
        p_e = np.broadcast_to(noise.m_e, (n, n, noise.m_e.shape[0])).copy()
        return p_x, p_e


class OracleDenoiser:
    """Always predicts one fixed clean graph."""

    def __init__(self, target: Dag):
        self.target = target

    def predict(
        self,
        noisy: Dag,
        cond: Optional[np.ndarray],
        t: int,
        noise: NoiseModel,
    ) -> Tuple[np.ndarray, np.ndarray]:
        return (
            self.target.node_types.astype(np.float64),
            self.target.edge_types.astype(np.float64),
        )


def reverse_sample(
    denoiser: Denoiser,
    cond: TruthTable,
    stats: LevelStructureStats,
    noise: NoiseModel,
    rng: np.random.Generator,
    structure: Optional[LevelAssignment] = None,
    trace: Optional[List[Dag]] = None,
) -> Dag:
    """
    Generate one graph for a truth-table condition.

    Args:
        denoiser: Model queried once per step
        cond: Target truth table (fixes n_in / n_out)
        stats: Level-structure statistics
        noise: Noise process
        rng: Random stream
        structure: Pre-drawn level structure; sampled from stats when None
        trace: When given, every intermediate graph G^T..G^0 is appended

    Returns:
        G^0 with the sampled level labels
    """
    if structure is None:
        structure = sample_level_structure(stats, cond.n_in, cond.n_out, rng)
    levels = structure.levels
    roster: NodeRoster = structure.roster()
    cond_rows = encode_condition(cond, roster, rng)

    graph = initial_state(structure.node_types(), levels, noise, rng)
    normalized = graph.normalized_levels()
    if trace is not None:
        trace.append(graph)

    tau_now = local_timesteps(noise.T, normalized, noise)
    for t in range(noise.T, 0, -1):
        tau_prev = local_timesteps(t - 1, normalized, noise)
        p_x, p_e = denoiser.predict(graph, cond_rows, t, noise)

        edge_dist = posterior_step(
            p_e,
            graph.edge_index,
            edge_timesteps(tau_now),
            edge_timesteps(tau_prev),
            noise,
            Target.EDGE,
        )
        edges = sample_categorical(edge_dist, rng)
        np.fill_diagonal(edges, 0)

        if noise.node_diffusion:
            node_dist = posterior_step(
                p_x, graph.node_index, tau_now, tau_prev, noise, Target.NODE
            )
            nodes = sample_categorical(node_dist, rng)
            graph = Dag(one_hot(nodes, graph.k_x), one_hot(edges, graph.k_e), levels)
        else:
            graph = graph.with_edges(edges)

        if trace is not None:
            trace.append(graph)
        tau_now = tau_prev

    logger.debug(
        f"[Sampler] Sampled n={graph.n} over {structure.n_levels} levels, "
        f"{int(graph.adjacency.sum())} edges"
    )
    return graph
