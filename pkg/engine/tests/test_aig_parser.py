"""
Unit tests for services/aig_parser.py
"""

import numpy as np

from aigdiff.models.aig import Aig, AndGate, OutputWire, aig_to_dag, simulate, structural_levels
from aigdiff.models.dag import NODE_AND, NODE_INPUT, NODE_OUTPUT, Dag
from aigdiff.services.aig_parser import candidate_children, parse_dag_to_aig
from aigdiff.utils.aig_generator import random_aig, random_dag


def _dag(types, edge_triples):
    edges = np.zeros((len(types), len(types)), dtype=np.int64)
    for child, parent, cat in edge_triples:
        edges[child, parent] = cat
    return Dag.from_indices(types, edges, structural_levels(types, edges))


# ===== CANDIDATE TESTS =====


def test_candidates_exclude_same_level_children():
    """Only present children on strictly lower levels qualify"""
    types = [NODE_INPUT, NODE_INPUT, NODE_AND, NODE_AND, NODE_OUTPUT]
    dag = _dag(types, [(0, 2, 1), (1, 2, 1), (0, 3, 1), (2, 3, 2), (3, 4, 1)])
    assert list(candidate_children(dag, 3)) == [0, 2]
    levels = np.array(dag.levels)
    levels[3] = levels[2]
    flat = Dag(dag.node_types, dag.edge_types, levels)
    assert list(candidate_children(flat, 3)) == [0]
    assert list(candidate_children(flat, 4)) == [3]


# ===== PARSING TESTS =====


def test_parse_clean_graph_keeps_function(nand_aig, nand_tt, rng):
    """A well-formed graph parses to the same function"""
    aig = parse_dag_to_aig(aig_to_dag(nand_aig), rng)
    assert simulate(aig) == nand_tt
    assert not aig.has_const0


def test_parse_round_trips_random_circuits(rng):
    """Exactly-wired circuits keep their truth tables through parsing"""
    for _ in range(50):
        aig, tt = random_aig(4, 2, 16, rng)
        assert simulate(parse_dag_to_aig(aig_to_dag(aig), rng)) == tt


def test_missing_child_becomes_constant(rng):
    """An AND with one child is completed with constant zero"""
    types = [NODE_INPUT, NODE_INPUT, NODE_AND, NODE_OUTPUT]
    aig = parse_dag_to_aig(_dag(types, [(0, 2, 1), (2, 3, 1)]), rng)
    assert aig.has_const0
    assert simulate(aig).columns.tolist() == [[0, 0, 0, 0]]


def test_output_without_child_reads_constant(rng):
    """An output with no candidate is wired to constant zero"""
    types = [NODE_INPUT, NODE_INPUT, NODE_OUTPUT]
    aig = parse_dag_to_aig(_dag(types, []), rng)
    assert aig.n_and == 0
    assert simulate(aig).columns.tolist() == [[0, 0, 0, 0]]


def test_extra_input_nodes_act_as_constant(rng):
    """Input-typed nodes past n_in are constants, negation preserved"""
    source = Aig(2, 1, (AndGate(0, False, 2, True),), (OutputWire(3, False),), has_const0=True)
    aig = parse_dag_to_aig(aig_to_dag(source), rng, n_in=2)
    assert aig.n_in == 2
    assert simulate(aig) == simulate(source)
    assert simulate(aig).columns.tolist() == [[0, 1, 0, 1]]


def test_floating_gates_removed(rng):
    """ANDs outside every output cone disappear"""
    types = [NODE_INPUT, NODE_INPUT, NODE_AND, NODE_AND, NODE_OUTPUT]
    dag = _dag(types, [(0, 2, 1), (1, 2, 1), (0, 3, 2), (1, 3, 1), (0, 4, 1)])
    aig = parse_dag_to_aig(dag, rng)
    assert aig.n_and == 0
    assert aig.outputs == (OutputWire(0, False),)


def test_parser_is_total_on_arbitrary_graphs(rng):
    """Any typed DAG parses into a simulatable AIG with its output count"""
    for _ in range(300):
        dag = random_dag(int(rng.integers(2, 13)), rng)
        aig = parse_dag_to_aig(dag, rng)
        aig.validate()
        tt = simulate(aig)
        assert tt.n_out == int((dag.node_index == NODE_OUTPUT).sum())
