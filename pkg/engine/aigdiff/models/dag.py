"""
Categorical DAG representation.

A Dag stores one-hot node types (n × k_x), one-hot edge types (n × n × k_e)
and per-node levels. Entry (i, j) of the edge tensor is the edge from child i
to parent j: row i lists the parents of i, column j lists the children of j.
Edge category 0 means "absent".

Noisy graphs produced during diffusion keep the clean graph's levels, which is
why levels are stored instead of recomputed.
"""

from collections import deque
from dataclasses import dataclass
from functools import cached_property
from typing import List, Optional, Sequence, Tuple

import numpy as np

from aigdiff.exceptions import CyclicGraphError, ShapeMismatchError

# Node categories for circuits
NODE_INPUT = 0
NODE_AND = 1
NODE_OUTPUT = 2
NODE_TYPE_NAMES = ("input", "and", "output")

# Edge categories
EDGE_ABSENT = 0
EDGE_NORMAL = 1
EDGE_NEGATED = 2

K_X = 3
K_E = 3


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, copy=True)
    array.setflags(write=False)
    return array


def one_hot(indices: np.ndarray, k: int) -> np.ndarray:
    """Integer category array -> one-hot int8 array with a trailing axis of size k."""
    indices = np.asarray(indices, dtype=np.int64)
    return np.eye(k, dtype=np.int8)[indices]


@dataclass(frozen=True, eq=False)
class Dag:
    """Immutable categorical graph with level labels."""

    node_types: np.ndarray
    edge_types: np.ndarray
    levels: np.ndarray

    def __post_init__(self):
        node_types = np.asarray(self.node_types)
        edge_types = np.asarray(self.edge_types)
        levels = np.asarray(self.levels, dtype=np.int64)

        if node_types.ndim != 2:
            raise ShapeMismatchError(f"node_types must be 2-D, got shape {node_types.shape}")
        n = node_types.shape[0]
        if edge_types.ndim != 3 or edge_types.shape[:2] != (n, n):
            raise ShapeMismatchError(
                f"edge_types must have shape ({n}, {n}, k_e), got {edge_types.shape}"
            )
        if levels.shape != (n,):
            raise ShapeMismatchError(f"levels must have shape ({n},), got {levels.shape}")
        if n and levels.min() < 0:
            raise ShapeMismatchError("levels must be non-negative")

        object.__setattr__(self, "node_types", _frozen(node_types))
        object.__setattr__(self, "edge_types", _frozen(edge_types))
        object.__setattr__(self, "levels", _frozen(levels))

    # ------------------------------------------------------------------
    # Construction
    # ------------------------------------------------------------------
    @classmethod
    def from_indices(
        cls,
        node_index: Sequence[int],
        edge_index: np.ndarray,
        levels: Sequence[int],
        k_x: int = K_X,
        k_e: int = K_E,
    ) -> "Dag":
        """Build a Dag from integer category arrays."""
        return cls(
            node_types=one_hot(np.asarray(node_index), k_x),
            edge_types=one_hot(np.asarray(edge_index), k_e),
            levels=np.asarray(levels, dtype=np.int64),
        )

    def with_edges(self, edge_index: np.ndarray) -> "Dag":
        """Same nodes and levels, new edge categories."""
        return Dag(
            node_types=self.node_types,
            edge_types=one_hot(edge_index, self.k_e),
            levels=self.levels,
        )

    def with_nodes(self, node_index: np.ndarray) -> "Dag":
        return Dag(
            node_types=one_hot(node_index, self.k_x),
            edge_types=self.edge_types,
            levels=self.levels,
        )

    # ------------------------------------------------------------------
    # Views
    # ------------------------------------------------------------------
    @property
    def n(self) -> int:
        return int(self.node_types.shape[0])

    @property
    def k_x(self) -> int:
        return int(self.node_types.shape[1])

    @property
    def k_e(self) -> int:
        return int(self.edge_types.shape[2])

    @property
    def max_level(self) -> int:
        return int(self.levels.max()) if self.n else 0

    @cached_property
    def node_index(self) -> np.ndarray:
        return _frozen(self.node_types.argmax(axis=-1))

    @cached_property
    def edge_index(self) -> np.ndarray:
        return _frozen(self.edge_types.argmax(axis=-1))

    @cached_property
    def adjacency(self) -> np.ndarray:
        """Boolean (n, n): True where an edge of any present category exists."""
        return _frozen(self.edge_index != EDGE_ABSENT)

    def normalized_levels(self) -> np.ndarray:
        """Levels divided by the maximum level (zeros for a single-level graph)."""
        if self.max_level == 0:
            return np.zeros(self.n, dtype=np.float64)
        return self.levels.astype(np.float64) / self.max_level

    def edge_list(self) -> List[Tuple[int, int, int]]:
        """Existing edges as (child, parent, category), sorted."""
        children, parents = np.nonzero(self.adjacency)
        cats = self.edge_index[children, parents]
        return [(int(c), int(p), int(k)) for c, p, k in zip(children, parents, cats)]

    def children_of(self, node: int) -> np.ndarray:
        return np.flatnonzero(self.adjacency[:, node])

    def parents_of(self, node: int) -> np.ndarray:
        return np.flatnonzero(self.adjacency[node, :])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Dag):
            return NotImplemented
        return (
            np.array_equal(self.node_types, other.node_types)
            and np.array_equal(self.edge_types, other.edge_types)
            and np.array_equal(self.levels, other.levels)
        )

    def __repr__(self) -> str:
        return f"Dag(n={self.n}, edges={int(self.adjacency.sum())}, max_level={self.max_level})"


@dataclass(frozen=True)
class Permutation:
    """Bijection on {0..n-1}; node i is relocated to mapping[i]."""

    mapping: Tuple[int, ...]

    def __post_init__(self):
        mapping = tuple(int(v) for v in self.mapping)
        if sorted(mapping) != list(range(len(mapping))):
            raise ShapeMismatchError(f"Permutation mapping is not a bijection: {mapping}")
        object.__setattr__(self, "mapping", mapping)

    @classmethod
    def identity(cls, n: int) -> "Permutation":
        return cls(tuple(range(n)))

    @classmethod
    def random(cls, n: int, rng: np.random.Generator) -> "Permutation":
        return cls(tuple(int(v) for v in rng.permutation(n)))

    @property
    def size(self) -> int:
        return len(self.mapping)

    def inverse(self) -> "Permutation":
        inv = [0] * self.size
        for i, target in enumerate(self.mapping):
            inv[target] = i
        return Permutation(tuple(inv))

    def compose(self, inner: "Permutation") -> "Permutation":
        """self ∘ inner: apply inner first, then self."""
        if inner.size != self.size:
            raise ShapeMismatchError(f"Cannot compose sizes {self.size} and {inner.size}")
        return Permutation(tuple(self.mapping[inner.mapping[i]] for i in range(self.size)))

    def source_order(self) -> np.ndarray:
        """Index array s with s[σ(i)] = i, so permuted = original[s]."""
        return np.asarray(self.inverse().mapping, dtype=np.int64)

    def apply_nodes(self, values: np.ndarray) -> np.ndarray:
        """Relocate axis 0 of a per-node array."""
        return np.asarray(values)[self.source_order()]

    def apply_pairs(self, values: np.ndarray) -> np.ndarray:
        """Relocate axes 0 and 1 of a per-pair array."""
        order = self.source_order()
        return np.asarray(values)[order][:, order]


def node_levels(edges: np.ndarray, n: Optional[int] = None) -> np.ndarray:
    """
    Longest-path levels by Kahn-style elimination from the leaves.

    Args:
        edges: n × n category matrix, or n × n × k one-hot tensor
        n: node count (inferred when omitted)

    Returns:
        int64 array: leaves get 0, others 1 + max over children

    Raises:
        CyclicGraphError: carrying one concrete cycle
    """
    edges = np.asarray(edges)
    if edges.ndim == 3:
        edges = edges.argmax(axis=-1)
    n = edges.shape[0] if n is None else n
    if edges.shape != (n, n):
        raise ShapeMismatchError(f"edges must be ({n}, {n}), got {edges.shape}")

    exists = edges != EDGE_ABSENT
    pending_children = exists.sum(axis=0).astype(np.int64)
    levels = np.zeros(n, dtype=np.int64)
    queue = deque(int(v) for v in np.flatnonzero(pending_children == 0))
    processed = 0

    while queue:
        child = queue.popleft()
        processed += 1
        for parent in np.flatnonzero(exists[child]):
            levels[parent] = max(levels[parent], levels[child] + 1)
            pending_children[parent] -= 1
            if pending_children[parent] == 0:
                queue.append(int(parent))

    if processed < n:
        raise CyclicGraphError(_find_cycle(exists, pending_children > 0))
    return levels


def _find_cycle(exists: np.ndarray, remaining: np.ndarray) -> List[int]:
    # Every remaining node still has a remaining child, so walking children
    # inside the remaining set must revisit a node.
    start = int(np.flatnonzero(remaining)[0])
    seen = {}
    path: List[int] = []
    node = start
    while node not in seen:
        seen[node] = len(path)
        path.append(node)
        children = np.flatnonzero(exists[:, node] & remaining)
        node = int(children[0])
    cycle = path[seen[node]:]
    # Report in child -> parent order
    return list(reversed(cycle)) + [cycle[-1]]


def permute(dag: Dag, sigma: Permutation) -> Dag:
    """Relocate node i to σ(i) and edge (i, j) to (σ(i), σ(j))."""
    if sigma.size != dag.n:
        raise ShapeMismatchError(f"Permutation size {sigma.size} != node count {dag.n}")
    return Dag(
        node_types=sigma.apply_nodes(dag.node_types),
        edge_types=sigma.apply_pairs(dag.edge_types),
        levels=sigma.apply_nodes(dag.levels),
    )


@dataclass(frozen=True)
class OneHotViolation:
    kind: str  # "node" | "edge"
    index: Tuple[int, ...]
    values: Tuple[int, ...]


def check_onehot(dag: Dag) -> List[OneHotViolation]:
    """List every node row and edge entry that is not exactly one-hot."""
    violations: List[OneHotViolation] = []

    def _bad(rows: np.ndarray) -> np.ndarray:
        binary = np.isin(rows, (0, 1)).all(axis=-1)
        return ~(binary & (rows.sum(axis=-1) == 1))

    for i in np.flatnonzero(_bad(dag.node_types)):
        violations.append(
            OneHotViolation("node", (int(i),), tuple(int(v) for v in dag.node_types[i]))
        )
    for i, j in zip(*np.nonzero(_bad(dag.edge_types))):
        violations.append(
            OneHotViolation(
                "edge", (int(i), int(j)), tuple(int(v) for v in dag.edge_types[i, j])
            )
        )
    return violations
