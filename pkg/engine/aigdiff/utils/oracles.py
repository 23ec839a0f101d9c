"""
Slow reference implementations used to check the fast paths.
"""

import itertools
from functools import lru_cache
from typing import Dict, List

import numpy as np

from aigdiff.models.dag import EDGE_ABSENT
from aigdiff.services.noise_model import NoiseModel, Target


def explicit_cumulative(t: int, model: NoiseModel, which: Target) -> np.ndarray:
    """Q^1 · Q^2 ··· Q^t by repeated matrix products."""
    k = model.marginal(which).shape[0]
    product = np.eye(k)
    for s in range(1, t + 1):
        product = product @ model.one_step(s, which)
    return product


def chain_probability(
    start: int, end: int, s_from: int, s_to: int, model: NoiseModel, which: Target
) -> float:
    """q(x^{s_to} = end | x^{s_from} = start) summed over every intermediate state chain."""
    if s_to == s_from:
        return float(start == end)
    k = model.marginal(which).shape[0]
    steps = [model.one_step(s, which) for s in range(s_from + 1, s_to + 1)]
    total = 0.0
    for middle in itertools.product(range(k), repeat=len(steps) - 1):
        path = (start,) + middle + (end,)
        weight = 1.0
        for matrix, (a, b) in zip(steps, zip(path, path[1:])):
            weight *= matrix[a, b]
            if weight == 0.0:
                break
        total += weight
    return total


def brute_force_posterior(
    pred: np.ndarray,
    current: int,
    tau_t: int,
    tau_prev: int,
    model: NoiseModel,
    which: Target,
) -> np.ndarray:
    """
    Single-element posterior by explicit enumeration:
    Σ_x0 pred(x0) q(x' | x0) q(x_t | x') / q(x_t | x0).
    """
    pred = np.asarray(pred, dtype=np.float64)
    pred = pred / pred.sum()
    k = pred.shape[0]
    out = np.zeros(k)
    for x0 in range(k):
        if pred[x0] == 0.0:
            continue
        denom = chain_probability(x0, current, 0, tau_t, model, which)
        if denom == 0.0:
            continue
        for x_prev in range(k):
            out[x_prev] += (
                pred[x0]
                * chain_probability(x0, x_prev, 0, tau_prev, model, which)
                * chain_probability(x_prev, current, tau_prev, tau_t, model, which)
                / denom
            )
    return out


def longest_path_levels(edges: np.ndarray) -> np.ndarray:
    """Level of every node by memoized recursion over children."""
    edges = np.asarray(edges)
    if edges.ndim == 3:
        edges = edges.argmax(axis=-1)
    n = edges.shape[0]
    children: Dict[int, List[int]] = {
        j: [int(i) for i in np.flatnonzero(edges[:, j] != EDGE_ABSENT)] for j in range(n)
    }

    @lru_cache(maxsize=None)
    def level(node: int) -> int:
        kids = children[node]
        return 0 if not kids else 1 + max(level(c) for c in kids)

    return np.asarray([level(j) for j in range(n)], dtype=np.int64)
