"""
Parse sampled Dags into legal AIGs.

Each AND gate draws two children and each output one child, without
replacement, from its present lower-level non-output children. Missing slots
are filled by the constant-zero node. Gates outside every output cone are
removed afterwards.
"""

import logging
from typing import List, Optional, Tuple

import numpy as np

from aigdiff.models.aig import Aig, AndGate, OutputWire, NodeRoster, compact
from aigdiff.models.dag import EDGE_ABSENT, EDGE_NEGATED, NODE_AND, NODE_OUTPUT, Dag

logger = logging.getLogger(__name__)


def candidate_children(dag: Dag, gate: int) -> np.ndarray:
    """Present children of `gate` at strictly lower levels that are not outputs."""
    column = dag.edge_index[:, gate]
    mask = (
        (column != EDGE_ABSENT)
        & (dag.levels < dag.levels[gate])
        & (dag.node_index != NODE_OUTPUT)
    )
    return np.flatnonzero(mask)


def _draw(
    dag: Dag, gate: int, slots: int, rng: np.random.Generator
) -> List[Tuple[Optional[int], bool]]:
    # None marks the constant-zero node
    pool = candidate_children(dag, gate)
    take = min(slots, pool.size)
    chosen = rng.choice(pool, size=take, replace=False) if take else np.empty(0, dtype=np.int64)
    picks: List[Tuple[Optional[int], bool]] = [
        (int(c), bool(dag.edge_index[c, gate] == EDGE_NEGATED)) for c in chosen
    ]
    picks.extend([(None, False)] * (slots - take))
    return picks


def parse_dag_to_aig(dag: Dag, rng: np.random.Generator, n_in: Optional[int] = None) -> Aig:
    """
    Repair and convert a Dag into an Aig.

    Args:
        dag: Sampled or clean graph with node types and levels
        rng: Stream for child sampling
        n_in: Primary input count; input-typed nodes past the first n_in
            (ascending id) act as constant-zero nodes. Defaults to all of them.

    Returns:
        Aig with inputs in ascending id order and outputs in ascending id order
    """
    roster = NodeRoster.from_node_types(dag.node_index, n_in=n_in)
    input_set = set(roster.input_ids)
    n_inputs = roster.n_in

    and_ids = sorted(
        (int(i) for i in np.flatnonzero(dag.node_index == NODE_AND)),
        key=lambda i: (int(dag.levels[i]), i),
    )

    # Ids in the Aig under construction: inputs, const, ANDs by (level, id)
    const_id = n_inputs
    new_id = {old: k for k, old in enumerate(roster.input_ids)}
    for k, old in enumerate(and_ids):
        new_id[old] = const_id + 1 + k

    def resolve(child: Optional[int]) -> int:
        if child is None or (child not in input_set and child not in new_id):
            # Extra input-typed nodes are constants
            return const_id
        return new_id[child]

    gates = []
    for old in and_ids:
        (a, neg_a), (b, neg_b) = _draw(dag, old, 2, rng)
        gates.append(AndGate(resolve(a), neg_a, resolve(b), neg_b))

    outputs = []
    for old in roster.output_ids:
        ((c, neg),) = _draw(dag, old, 1, rng)
        outputs.append(OutputWire(resolve(c), neg))

    raw = Aig(n_inputs, roster.n_out, tuple(gates), tuple(outputs), has_const0=True)
    aig = compact(raw)
    logger.debug(
        f"[AigParser] Parsed n={dag.n} into {aig.n_and} ANDs "
        f"({raw.n_and - aig.n_and} floating removed, const0={aig.has_const0})"
    )
    return aig
