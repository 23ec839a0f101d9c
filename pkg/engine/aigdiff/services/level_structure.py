"""
Empirical level-structure statistics and sampling.

Sampling draws a level count N, then interior level sizes M_1..M_{N-2};
level 0 always holds the n_in inputs and level N-1 the n_out outputs.
"""

import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable

import numpy as np

from aigdiff.exceptions import LevelStructureError
from aigdiff.models.aig import NodeRoster
from aigdiff.models.dag import NODE_AND, NODE_INPUT, NODE_OUTPUT, Dag

logger = logging.getLogger(__name__)

MAX_RESAMPLES = 32
SUM_TOLERANCE = 1e-9


def _normalize(counts: Counter) -> Dict[int, float]:
    total = sum(counts.values())
    return {int(k): v / total for k, v in sorted(counts.items())}


def _check_distribution(name: str, dist: Dict[int, float]) -> None:
    if not dist:
        raise LevelStructureError(f"{name} has empty support")
    if any(p < 0 for p in dist.values()):
        raise LevelStructureError(f"{name} has negative probabilities")
    total = sum(dist.values())
    if abs(total - 1.0) > SUM_TOLERANCE:
        raise LevelStructureError(f"{name} sums to {total}, expected 1")


@dataclass(frozen=True)
class LevelStructureStats:
    """p(N) over level counts and p(M_i | i) over interior level sizes."""

    p_levels: Dict[int, float]
    p_size: Dict[int, Dict[int, float]] = field(default_factory=dict)

    def __post_init__(self):
        _check_distribution("p_levels", self.p_levels)
        for index, dist in self.p_size.items():
            _check_distribution(f"p_size[{index}]", dist)

    @classmethod
    def estimate(cls, dags: Iterable[Dag]) -> "LevelStructureStats":
        """Harvest level counts and interior sizes from graphs with structural levels."""
        level_counts: Counter = Counter()
        size_counts: Dict[int, Counter] = {}
        for dag in dags:
            n_levels = dag.max_level + 1
            level_counts[n_levels] += 1
            sizes = np.bincount(dag.levels, minlength=n_levels)
            for index in range(1, n_levels - 1):
                size_counts.setdefault(index, Counter())[int(sizes[index])] += 1
        if not level_counts:
            raise LevelStructureError("Cannot estimate level statistics from an empty dataset")
        return cls(
            p_levels=_normalize(level_counts),
            p_size={i: _normalize(c) for i, c in sorted(size_counts.items())},
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "p_levels": {str(k): v for k, v in sorted(self.p_levels.items())},
            "p_size": {
                str(i): {str(k): v for k, v in sorted(dist.items())}
                for i, dist in sorted(self.p_size.items())
            },
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "LevelStructureStats":
        try:
            p_levels = {int(k): float(v) for k, v in data["p_levels"].items()}
            p_size = {
                int(i): {int(k): float(v) for k, v in dist.items()}
                for i, dist in data.get("p_size", {}).items()
            }
        except (KeyError, TypeError, ValueError, AttributeError) as exc:
            raise LevelStructureError(f"Malformed level statistics: {exc}") from exc
        return cls(p_levels=p_levels, p_size=p_size)


@dataclass(frozen=True)
class LevelAssignment:
    """Sampled node count and per-node levels (inputs first, outputs last)."""

    n_in: int
    n_out: int
    levels: np.ndarray

    @property
    def n(self) -> int:
        return int(self.levels.shape[0])

    @property
    def n_levels(self) -> int:
        return int(self.levels.max()) + 1

    def node_types(self) -> np.ndarray:
        types = np.full(self.n, NODE_AND, dtype=np.int64)
        types[: self.n_in] = NODE_INPUT
        types[self.n - self.n_out:] = NODE_OUTPUT
        return types

    def roster(self) -> NodeRoster:
        return NodeRoster.standard(self.n_in, self.n - self.n_in - self.n_out, self.n_out)


def _draw(dist: Dict[int, float], rng: np.random.Generator) -> int:
    keys = list(dist.keys())
    probs = np.asarray([dist[k] for k in keys], dtype=np.float64)
    return int(keys[int(rng.choice(len(keys), p=probs / probs.sum()))])


def sample_level_structure(
    stats: LevelStructureStats,
    n_in: int,
    n_out: int,
    rng: np.random.Generator,
) -> LevelAssignment:
    """
    Sample a level structure with fixed boundary sizes.

    Raises:
        LevelStructureError: If no usable structure is drawn within the retry budget
    """
    for attempt in range(MAX_RESAMPLES + 1):
        n_levels = _draw(stats.p_levels, rng)
        if n_levels < 2:
            logger.warning(
                f"[LevelStructure] Sampled N={n_levels} < 2 (attempt {attempt + 1}), resampling"
            )
            continue
        interior = range(1, n_levels - 1)
        if any(i not in stats.p_size for i in interior):
            logger.warning(
                f"[LevelStructure] No size statistics for N={n_levels} (attempt {attempt + 1}), "
                "resampling"
            )
            continue
        sizes = [n_in] + [_draw(stats.p_size[i], rng) for i in interior] + [n_out]
        levels = np.repeat(np.arange(n_levels, dtype=np.int64), sizes)
        return LevelAssignment(n_in=n_in, n_out=n_out, levels=levels)

    logger.error(f"[LevelStructure] Gave up after {MAX_RESAMPLES} resamples")
    raise LevelStructureError(
        f"Could not sample a level structure with N >= 2 after {MAX_RESAMPLES} resamples"
    )
