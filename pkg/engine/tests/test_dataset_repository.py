"""
Unit tests for repositories/dataset_repository.py

Tests cover:
- JSONL write/read
- Line-numbered format errors
- Level statistics sidecar
"""

import json

import numpy as np
import pytest

from aigdiff.exceptions import DatasetFormatError
from aigdiff.models.aig import aig_to_dag
from aigdiff.repositories.dataset_repository import (
    DatasetRepository,
    encode_line,
    load_stats,
    record_from_graph,
    stats_path_for,
)


def _write_lines(path, lines):
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


# ===== READ/WRITE TESTS =====


def test_write_then_read(tmp_path, circuits):
    """Written graphs and tables read back identically"""
    repository = DatasetRepository(tmp_path / "data.jsonl")
    assert repository.write(circuits) == len(circuits)
    loaded = repository.read_all()
    assert len(loaded) == len(circuits)
    for (dag, tt), (other_dag, other_tt) in zip(circuits, loaded):
        assert dag == other_dag
        assert tt == other_tt


def test_line_layout(nand_aig, nand_tt):
    """Records use compact JSON with the documented keys"""
    record = record_from_graph(aig_to_dag(nand_aig), nand_tt)
    line = encode_line(record)
    assert json.loads(line) == {
        "n_in": 2,
        "n_out": 1,
        "node_types": [0, 0, 1, 2],
        "edges": [[0, 2, 1], [1, 2, 1], [2, 3, 2]],
        "tt": ["e"],
    }
    assert " " not in line


def test_levels_key_optional(tmp_path, nand_aig, nand_tt):
    """Stored levels are used verbatim when present"""
    record = record_from_graph(aig_to_dag(nand_aig), nand_tt, include_levels=True)
    assert record.levels == [0, 0, 1, 2]
    data = record.model_dump()
    data["levels"] = [0, 0, 1, 5]
    path = tmp_path / "levels.jsonl"
    _write_lines(path, [json.dumps(data)])
    ((dag, _),) = DatasetRepository(path).read_all()
    assert dag.levels.tolist() == [0, 0, 1, 5]


def test_blank_lines_skipped(tmp_path, nand_aig, nand_tt):
    """Empty lines are ignored"""
    line = encode_line(record_from_graph(aig_to_dag(nand_aig), nand_tt))
    path = tmp_path / "blank.jsonl"
    _write_lines(path, [line, "", line])
    assert len(DatasetRepository(path).read_all()) == 2


# ===== FORMAT ERROR TESTS =====


def _valid_line(nand_aig, nand_tt):
    return encode_line(record_from_graph(aig_to_dag(nand_aig), nand_tt))


def test_invalid_json_reports_line(tmp_path, nand_aig, nand_tt):
    """Broken JSON is reported with its 1-based line number"""
    path = tmp_path / "broken.jsonl"
    _write_lines(path, [_valid_line(nand_aig, nand_tt), "{not json"])
    with pytest.raises(DatasetFormatError) as info:
        DatasetRepository(path).read_all()
    assert info.value.line_no == 2
    assert "line 2" in str(info.value)


def test_bad_edge_category_reports_line(tmp_path, nand_aig, nand_tt):
    """Edge category 0 is not a stored edge"""
    data = json.loads(_valid_line(nand_aig, nand_tt))
    data["edges"][0][2] = 0
    path = tmp_path / "category.jsonl"
    _write_lines(path, [json.dumps(data)])
    with pytest.raises(DatasetFormatError) as info:
        DatasetRepository(path).read_all()
    assert info.value.line_no == 1


def test_unknown_key_rejected(tmp_path, nand_aig, nand_tt):
    """Extra keys fail validation"""
    data = json.loads(_valid_line(nand_aig, nand_tt))
    data["comment"] = "x"
    path = tmp_path / "extra.jsonl"
    _write_lines(path, [json.dumps(data)])
    with pytest.raises(DatasetFormatError):
        DatasetRepository(path).read_all()


@pytest.mark.parametrize(
    "mutate",
    [
        lambda d: d.update(n_out=2),
        lambda d: d.update(n_in=3),
        lambda d: d.update(tt=["e", "e"]),
        lambda d: d["edges"].append([0, 9, 1]),
        lambda d: d.update(levels=[0, 0]),
        lambda d: d.update(tt=["g"]),
    ],
)
def test_inconsistent_records_rejected(tmp_path, nand_aig, nand_tt, mutate):
    """Counts, ids, levels and hex are cross-checked"""
    data = json.loads(_valid_line(nand_aig, nand_tt))
    mutate(data)
    path = tmp_path / "bad.jsonl"
    _write_lines(path, [_valid_line(nand_aig, nand_tt), json.dumps(data)])
    with pytest.raises(DatasetFormatError) as info:
        DatasetRepository(path).read_all()
    assert info.value.line_no == 2


def test_cyclic_record_rejected(tmp_path):
    """Edges forming a cycle are a format error"""
    data = {
        "n_in": 1,
        "n_out": 1,
        "node_types": [0, 1, 1, 2],
        "edges": [[1, 2, 1], [2, 1, 1], [2, 3, 1]],
        "tt": ["4"],
    }
    path = tmp_path / "cycle.jsonl"
    _write_lines(path, [json.dumps(data)])
    with pytest.raises(DatasetFormatError):
        DatasetRepository(path).read_all()


# ===== STATISTICS SIDECAR TESTS =====


def test_stats_sidecar_round_trip(dataset_path, stats):
    """The sidecar sits next to the dataset and reloads equal"""
    assert stats_path_for(dataset_path).exists()
    loaded = DatasetRepository(dataset_path).read_stats()
    assert loaded == stats
    assert sum(loaded.p_levels.values()) == pytest.approx(1.0)
    for dist in loaded.p_size.values():
        assert sum(dist.values()) == pytest.approx(1.0)


def test_stats_malformed(tmp_path):
    """Unreadable statistics raise DatasetFormatError"""
    path = tmp_path / "stats.json"
    path.write_text("{}", encoding="utf-8")
    with pytest.raises(DatasetFormatError):
        load_stats(path)
    path.write_text("[", encoding="utf-8")
    with pytest.raises(DatasetFormatError):
        load_stats(path)
    path.write_text(json.dumps({"p_levels": {"3": 0.5}}), encoding="utf-8")
    with pytest.raises(DatasetFormatError):
        load_stats(path)


def test_write_creates_parent_dirs(tmp_path, circuits):
    """Nested output directories are created"""
    path = tmp_path / "a" / "b" / "data.jsonl"
    DatasetRepository(path).write(circuits[:2], include_levels=True)
    assert path.exists()
    assert np.array_equal(DatasetRepository(path).read_all()[0][0].levels, circuits[0][0].levels)
