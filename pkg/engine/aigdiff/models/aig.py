"""
And-Inverter Graph semantics.

Node ids in an Aig are ordered: primary inputs, the optional constant-zero
node, AND gates in topological order, then outputs. Truth-table row r assigns
bit i of r to input i (bit 0 = least significant).
"""

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Set, Tuple, Union

import numpy as np

from aigdiff.exceptions import InvalidAigError, ShapeMismatchError
from aigdiff.models.dag import (
    EDGE_ABSENT,
    EDGE_NEGATED,
    EDGE_NORMAL,
    NODE_AND,
    NODE_INPUT,
    NODE_OUTPUT,
    Dag,
    Permutation,
    node_levels,
)


@dataclass(frozen=True)
class AndGate:
    child_a: int
    neg_a: bool
    child_b: int
    neg_b: bool

    @property
    def fanins(self) -> Tuple[Tuple[int, bool], Tuple[int, bool]]:
        return (self.child_a, self.neg_a), (self.child_b, self.neg_b)


@dataclass(frozen=True)
class OutputWire:
    child: int
    negated: bool


@dataclass(frozen=True)
class Aig:
    n_in: int
    n_out: int
    and_gates: Tuple[AndGate, ...]
    outputs: Tuple[OutputWire, ...]
    has_const0: bool = False

    def __post_init__(self):
        object.__setattr__(self, "and_gates", tuple(self.and_gates))
        object.__setattr__(self, "outputs", tuple(self.outputs))
        if len(self.outputs) != self.n_out:
            raise InvalidAigError(f"Expected {self.n_out} outputs, got {len(self.outputs)}")

    # ------------------------------------------------------------------
    # Id layout
    # ------------------------------------------------------------------
    @property
    def const_id(self) -> Optional[int]:
        return self.n_in if self.has_const0 else None

    @property
    def first_and_id(self) -> int:
        return self.n_in + int(self.has_const0)

    @property
    def n_and(self) -> int:
        return len(self.and_gates)

    @property
    def first_output_id(self) -> int:
        return self.first_and_id + self.n_and

    @property
    def num_nodes(self) -> int:
        return self.first_output_id + self.n_out

    def and_id(self, k: int) -> int:
        return self.first_and_id + k

    def output_id(self, k: int) -> int:
        return self.first_output_id + k

    def validate(self) -> None:
        """Raise InvalidAigError when a child id is dangling or breaks topological order."""
        for k, gate in enumerate(self.and_gates):
            gid = self.and_id(k)
            for child, _ in gate.fanins:
                if not 0 <= child < gid:
                    raise InvalidAigError(f"AND gate {gid} has dangling child id {child}")
        for k, wire in enumerate(self.outputs):
            if not 0 <= wire.child < self.first_output_id:
                raise InvalidAigError(
                    f"Output {self.output_id(k)} has dangling child id {wire.child}"
                )

    def levels(self) -> np.ndarray:
        """Longest-path levels with every output lifted onto one top level."""
        self.validate()
        levels = np.zeros(self.num_nodes, dtype=np.int64)
        for k, gate in enumerate(self.and_gates):
            levels[self.and_id(k)] = 1 + max(levels[gate.child_a], levels[gate.child_b])
        top = int(levels[: self.first_output_id].max(initial=0)) + 1
        levels[self.first_output_id:] = top
        return levels

    def node_types(self) -> np.ndarray:
        types = np.full(self.num_nodes, NODE_AND, dtype=np.int64)
        types[: self.first_and_id] = NODE_INPUT
        types[self.first_output_id:] = NODE_OUTPUT
        return types

    def size(self) -> int:
        """Gate count: inputs + ANDs + outputs (the constant node is not a gate)."""
        return self.n_in + self.n_and + self.n_out


@dataclass(frozen=True, eq=False)
class TruthTable:
    """Output columns of a combinational function, one bit per input assignment."""

    n_in: int
    columns: np.ndarray = field(repr=False)

    def __post_init__(self):
        columns = np.asarray(self.columns, dtype=np.uint8)
        if columns.ndim != 2:
            raise ShapeMismatchError(f"columns must be 2-D (n_out, rows), got {columns.shape}")
        if columns.shape[1] != self.rows:
            raise ShapeMismatchError(
                f"column length {columns.shape[1]} != 2^{self.n_in} = {self.rows}"
            )
        if not np.isin(columns, (0, 1)).all():
            raise ShapeMismatchError("truth-table bits must be 0 or 1")
        columns = columns.copy()
        columns.setflags(write=False)
        object.__setattr__(self, "columns", columns)

    @property
    def rows(self) -> int:
        return 1 << self.n_in

    @property
    def n_out(self) -> int:
        return int(self.columns.shape[0])

    def to_hex(self) -> List[str]:
        """Each column as big-endian hex: row 0 is the most significant bit."""
        width = max(1, math.ceil(self.rows / 4))
        return [np.packbits(col).tobytes().hex()[:width] for col in self.columns]

    @classmethod
    def from_hex(cls, n_in: int, hex_columns: Sequence[str]) -> "TruthTable":
        rows = 1 << n_in
        width = max(1, math.ceil(rows / 4))
        columns = []
        for text in hex_columns:
            text = text.strip().lower()
            if len(text) != width:
                raise ShapeMismatchError(
                    f"hex column '{text}' has {len(text)} digits, expected {width} for n_in={n_in}"
                )
            try:
                raw = bytes.fromhex(text + ("0" if len(text) % 2 else ""))
            except ValueError as exc:
                raise ShapeMismatchError(f"hex column '{text}' is not hexadecimal") from exc
            bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8))
            if bits[rows:].any():
                raise ShapeMismatchError(f"hex column '{text}' sets bits beyond row {rows - 1}")
            columns.append(bits[:rows])
        return cls(n_in=n_in, columns=np.asarray(columns, dtype=np.uint8).reshape(-1, rows))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TruthTable):
            return NotImplemented
        return self.n_in == other.n_in and np.array_equal(self.columns, other.columns)

    def __repr__(self) -> str:
        return f"TruthTable(n_in={self.n_in}, n_out={self.n_out}, hex={self.to_hex()})"


@dataclass(frozen=True)
class NodeRoster:
    """Which node ids carry which primary input / output identity."""

    n: int
    input_ids: Tuple[int, ...]
    output_ids: Tuple[int, ...]

    @classmethod
    def standard(cls, n_in: int, n_and: int, n_out: int) -> "NodeRoster":
        n = n_in + n_and + n_out
        return cls(n, tuple(range(n_in)), tuple(range(n - n_out, n)))

    @classmethod
    def from_node_types(cls, node_types: np.ndarray, n_in: Optional[int] = None) -> "NodeRoster":
        """
        Roster in ascending id order. With n_in given, input-typed nodes past
        the first n_in are constant nodes and carry no input identity.
        """
        types = np.asarray(node_types)
        if types.ndim == 2:
            types = types.argmax(axis=-1)
        input_ids = tuple(int(i) for i in np.flatnonzero(types == NODE_INPUT))
        if n_in is not None:
            if n_in > len(input_ids):
                raise ShapeMismatchError(
                    f"Graph has {len(input_ids)} input nodes, expected at least {n_in}"
                )
            input_ids = input_ids[:n_in]
        return cls(
            n=int(types.shape[0]),
            input_ids=input_ids,
            output_ids=tuple(int(i) for i in np.flatnonzero(types == NODE_OUTPUT)),
        )

    @property
    def n_in(self) -> int:
        return len(self.input_ids)

    @property
    def n_out(self) -> int:
        return len(self.output_ids)

    def node_types(self) -> np.ndarray:
        types = np.full(self.n, NODE_AND, dtype=np.int64)
        types[list(self.input_ids)] = NODE_INPUT
        types[list(self.output_ids)] = NODE_OUTPUT
        return types

    def permute(self, sigma: Permutation) -> "NodeRoster":
        if sigma.size != self.n:
            raise ShapeMismatchError(f"Permutation size {sigma.size} != roster size {self.n}")
        return NodeRoster(
            n=self.n,
            input_ids=tuple(sigma.mapping[i] for i in self.input_ids),
            output_ids=tuple(sigma.mapping[i] for i in self.output_ids),
        )


# ===== Simulation =====


def input_patterns(n_in: int) -> np.ndarray:
    """(n_in, 2^n_in) bits: row r of input i is bit i of r."""
    rows = np.arange(1 << n_in, dtype=np.int64)
    return ((rows[None, :] >> np.arange(n_in, dtype=np.int64)[:, None]) & 1).astype(bool)


def simulate(aig: Aig) -> TruthTable:
    """Exact truth table by an iterative topological sweep over all rows."""
    aig.validate()
    values = np.zeros((aig.num_nodes, 1 << aig.n_in), dtype=bool)
    values[: aig.n_in] = input_patterns(aig.n_in)
    # The constant node row stays all-zero
    for k, gate in enumerate(aig.and_gates):
        a = values[gate.child_a] ^ gate.neg_a
        b = values[gate.child_b] ^ gate.neg_b
        values[aig.and_id(k)] = a & b
    columns = np.zeros((aig.n_out, 1 << aig.n_in), dtype=np.uint8)
    for k, wire in enumerate(aig.outputs):
        columns[k] = values[wire.child] ^ wire.negated
    return TruthTable(aig.n_in, columns)


def simulate_recursive(aig: Aig) -> TruthTable:
    """Exact truth table by memoized descent with Python-int bitsets."""
    rows = 1 << aig.n_in
    full = (1 << rows) - 1
    gate_of: Dict[int, AndGate] = {aig.and_id(k): g for k, g in enumerate(aig.and_gates)}

    def input_mask(i: int) -> int:
        mask = 0
        for r in range(rows):
            if (r >> i) & 1:
                mask |= 1 << r
        return mask

    @lru_cache(maxsize=None)
    def value(node: int) -> int:
        if node < aig.n_in:
            return input_mask(node)
        if aig.has_const0 and node == aig.const_id:
            return 0
        gate = gate_of.get(node)
        if gate is None:
            raise InvalidAigError(f"Node {node} is not an input, constant or AND gate")
        a = value(gate.child_a) ^ (full if gate.neg_a else 0)
        b = value(gate.child_b) ^ (full if gate.neg_b else 0)
        return a & b

    columns = np.zeros((aig.n_out, rows), dtype=np.uint8)
    for k, wire in enumerate(aig.outputs):
        bits = value(wire.child) ^ (full if wire.negated else 0)
        for r in range(rows):
            columns[k, r] = (bits >> r) & 1
    return TruthTable(aig.n_in, columns)


# ===== Metrics =====


def function_accuracy(predicted: TruthTable, condition: TruthTable) -> float:
    """Fraction of equal output bits."""
    if predicted.n_in != condition.n_in or predicted.columns.shape != condition.columns.shape:
        raise ShapeMismatchError(
            f"Truth-table shapes differ: {predicted.columns.shape} vs {condition.columns.shape}"
        )
    return float(np.mean(predicted.columns == condition.columns))


def gate_validity_counts(graph: Union[Dag, Aig]) -> Tuple[int, int]:
    """(correctly wired gates, total AND + output gates)."""
    if isinstance(graph, Aig):
        # Structurally every AND has two fanins and every output one
        total = graph.n_and + graph.n_out
        return total, total
    types = graph.node_index
    fanin = graph.adjacency.sum(axis=0)
    is_and = types == NODE_AND
    is_out = types == NODE_OUTPUT
    correct = int(np.sum(is_and & (fanin == 2)) + np.sum(is_out & (fanin == 1)))
    return correct, int(is_and.sum() + is_out.sum())


def aig_validity(graph: Union[Dag, Aig]) -> float:
    """Fraction of AND gates with exactly 2 and outputs with exactly 1 incoming edge."""
    correct, total = gate_validity_counts(graph)
    if total == 0:
        return 1.0
    return correct / total


# ===== Dag conversion =====


def structural_levels(node_types: np.ndarray, edge_index: np.ndarray) -> np.ndarray:
    """Longest-path levels with all output nodes lifted to a shared top level."""
    types = np.asarray(node_types)
    if types.ndim == 2:
        types = types.argmax(axis=-1)
    levels = node_levels(edge_index)
    is_out = types == NODE_OUTPUT
    if is_out.any():
        inner = levels[~is_out]
        levels[is_out] = (int(inner.max()) if inner.size else 0) + 1
    return levels


def aig_to_dag(aig: Aig) -> Dag:
    """
    Categorical form of an Aig (node ids preserved).

    The constant node, when present, becomes an input-typed node at id n_in;
    readers tell it apart from primary inputs through the record's n_in.
    """
    n = aig.num_nodes
    edges = np.full((n, n), EDGE_ABSENT, dtype=np.int64)
    for k, gate in enumerate(aig.and_gates):
        gid = aig.and_id(k)
        for child, neg in gate.fanins:
            edges[child, gid] = EDGE_NEGATED if neg else EDGE_NORMAL
    for k, wire in enumerate(aig.outputs):
        edges[wire.child, aig.output_id(k)] = EDGE_NEGATED if wire.negated else EDGE_NORMAL
    return Dag.from_indices(aig.node_types(), edges, aig.levels())


def roster_of(aig: Aig) -> NodeRoster:
    return NodeRoster(
        n=aig.num_nodes,
        input_ids=tuple(range(aig.n_in)),
        output_ids=tuple(aig.output_id(k) for k in range(aig.n_out)),
    )


def output_cone(aig: Aig) -> Set[int]:
    """Ids of every node reachable downward from some output."""
    gate_of = {aig.and_id(k): g for k, g in enumerate(aig.and_gates)}
    reached: Set[int] = set()
    stack = [wire.child for wire in aig.outputs]
    while stack:
        node = stack.pop()
        if node in reached:
            continue
        reached.add(node)
        gate = gate_of.get(node)
        if gate is not None:
            stack.extend((gate.child_a, gate.child_b))
    return reached


def compact(aig: Aig) -> Aig:
    """
    Drop floating AND gates and an unused constant node, renumbering ids.

    Primary inputs are always kept since they index truth-table rows.
    Relative AND order is preserved.
    """
    reached = output_cone(aig)
    keep = [k for k in range(aig.n_and) if aig.and_id(k) in reached]
    uses_const = aig.has_const0 and aig.const_id in reached

    remap = {i: i for i in range(aig.n_in)}
    if uses_const:
        remap[aig.const_id] = aig.n_in
    first = aig.n_in + int(uses_const)
    for new_k, old_k in enumerate(keep):
        remap[aig.and_id(old_k)] = first + new_k

    gates = []
    for old_k in keep:
        g = aig.and_gates[old_k]
        gates.append(AndGate(remap[g.child_a], g.neg_a, remap[g.child_b], g.neg_b))
    outputs = [OutputWire(remap[w.child], w.negated) for w in aig.outputs]
    return Aig(aig.n_in, aig.n_out, tuple(gates), tuple(outputs), has_const0=uses_const)


def canonicalize(aig: Aig) -> Aig:
    """Reorder AND gates by (level, id) so ids stay topological after rewiring."""
    levels = aig.levels()
    order = sorted(range(aig.n_and), key=lambda k: (int(levels[aig.and_id(k)]), k))
    remap = {i: i for i in range(aig.first_and_id)}
    for new_k, old_k in enumerate(order):
        remap[aig.and_id(old_k)] = aig.and_id(new_k)
    gates = []
    for old_k in order:
        g = aig.and_gates[old_k]
        gates.append(AndGate(remap[g.child_a], g.neg_a, remap[g.child_b], g.neg_b))
    outputs = [OutputWire(remap[w.child], w.negated) for w in aig.outputs]
    return Aig(aig.n_in, aig.n_out, tuple(gates), tuple(outputs), aig.has_const0)
