"""
Random AIG generator for synthetic datasets.
"""

import logging
import math
from typing import List, Tuple

import numpy as np

from aigdiff.exceptions import InfeasibleBoundsError
from aigdiff.models.aig import Aig, AndGate, OutputWire, TruthTable, compact, simulate
from aigdiff.models.dag import K_E, K_X, Dag, node_levels

logger = logging.getLogger(__name__)

# Probability that a child is drawn from nodes without a parent yet
UNUSED_PREFERENCE = 0.5


def random_aig(
    n_in: int,
    n_out: int,
    max_gates: int,
    rng: np.random.Generator,
) -> Tuple[Aig, TruthTable]:
    """
    Grow a random AIG one AND gate at a time.

    The AND budget is drawn uniformly from [ceil(cap / 3), cap] where
    cap = max_gates - n_in - n_out. Each AND wires two distinct existing
    nodes with fair-coin polarities; outputs take sink ANDs first and fall
    back to uniform AND/input choices. Floating gates are removed.

    Args:
        n_in: Primary input count (>= 1)
        n_out: Primary output count (>= 1)
        max_gates: Upper bound on inputs + ANDs + outputs
        rng: Random stream owned by the caller

    Returns:
        (aig, exact truth table)

    Raises:
        InfeasibleBoundsError: If the bounds leave no room for the I/O gates
    """
    if n_in < 1 or n_out < 1:
        raise InfeasibleBoundsError(f"n_in and n_out must be >= 1, got {n_in}, {n_out}")
    cap = max_gates - n_in - n_out
    if cap < 0:
        raise InfeasibleBoundsError(
            f"max_gates={max_gates} cannot hold {n_in} inputs and {n_out} outputs"
        )

    n_and = int(rng.integers(math.ceil(cap / 3), cap + 1)) if cap > 0 else 0
    if n_in < 2:
        # Two distinct children need at least two nodes
        n_and = 0

    gates: List[AndGate] = []
    has_parent = np.zeros(n_in + n_and, dtype=bool)
    for k in range(n_and):
        node_count = n_in + k
        children = []
        for _ in range(2):
            unused = [
                v for v in range(node_count) if not has_parent[v] and v not in children
            ]
            if unused and rng.random() < UNUSED_PREFERENCE:
                child = int(rng.choice(unused))
            else:
                pool = [v for v in range(node_count) if v not in children]
                child = int(rng.choice(pool))
            children.append(child)
        has_parent[children] = True
        gates.append(
            AndGate(children[0], bool(rng.random() < 0.5), children[1], bool(rng.random() < 0.5))
        )

    sinks = [n_in + k for k in range(n_and) if not has_parent[n_in + k]]
    rng.shuffle(sinks)
    outputs: List[OutputWire] = []
    for _ in range(n_out):
        if sinks:
            child = int(sinks.pop())
        else:
            child = int(rng.integers(0, n_in + n_and))
        outputs.append(OutputWire(child, bool(rng.random() < 0.5)))

    aig = compact(Aig(n_in, n_out, tuple(gates), tuple(outputs)))
    return aig, simulate(aig)


def random_dag(n: int, rng: np.random.Generator, edge_density: float = 0.3) -> Dag:
    """
    Arbitrary typed DAG (not necessarily a well-formed AIG).

    Node types are uniform over the three categories; edges point forward in
    a random topological order with random categories.
    """
    types = rng.integers(0, K_X, size=n)
    order = rng.permutation(n)
    edges = np.zeros((n, n), dtype=np.int64)
    for a in range(n):
        for b in range(a + 1, n):
            if rng.random() < edge_density:
                edges[order[a], order[b]] = int(rng.integers(1, K_E))
    return Dag.from_indices(types, edges, node_levels(edges))
