"""
Unit tests for cli.py

Tests cover:
- Every subcommand on tiny inputs
- Exit codes for argument, data and configuration failures
"""

import json

import pytest

from aigdiff.cli import UsageError, infer_n_inputs, main
from aigdiff.models.aig import Aig, AndGate, OutputWire, aig_to_dag, simulate
from aigdiff.repositories.dataset_repository import DatasetRepository, stats_path_for
from aigdiff.services.selftest import tiny_train_config
from aigdiff.services.trainer import train_loop


@pytest.fixture
def checkpoint(tmp_path, dataset_path):
    """One-epoch checkpoint trained on the circuits fixture"""
    config = tiny_train_config(epochs=1, batch_size=5)
    return train_loop(config, dataset_path, tmp_path / "model.ckpt").checkpoint_path


@pytest.fixture
def and_path(tmp_path):
    """JSONL with the single circuit a ∧ b"""
    aig = Aig(2, 1, (AndGate(0, False, 1, False),), (OutputWire(2, False),))
    path = tmp_path / "and.jsonl"
    DatasetRepository(path).write([(aig_to_dag(aig), simulate(aig))])
    return path


# ===== GEN-DATA TESTS =====


def test_gen_data_is_deterministic(tmp_path):
    """Equal seeds write equal datasets with a stats sidecar and splits"""
    for name in ("a", "b"):
        argv = [
            "gen-data", "--n-inputs", "3", "--n-outputs", "1", "--max-gates", "10",
            "--count", "8", "--test-count", "2", "--seed", "5",
            "--out", str(tmp_path / name / "train.jsonl"),
        ]
        assert main(argv) == 0
    first = (tmp_path / "a" / "train.jsonl").read_bytes()
    assert first == (tmp_path / "b" / "train.jsonl").read_bytes()
    assert len(first.decode().splitlines()) == 8
    assert stats_path_for(tmp_path / "a" / "train.jsonl").exists()
    assert len(DatasetRepository(tmp_path / "a" / "train.test.jsonl").read_all()) == 2
    assert not (tmp_path / "a" / "train.val.jsonl").exists()


def test_gen_data_infeasible_bounds(tmp_path):
    """Bounds that cannot hold the I/O gates are a graph error"""
    argv = ["gen-data", "--n-inputs", "8", "--n-outputs", "2", "--max-gates", "5",
            "--count", "1", "--out", str(tmp_path / "x.jsonl")]
    assert main(argv) == 4


# ===== SIMULATE TESTS =====


def test_simulate_prints_hex(tmp_path, nand_aig, nand_tt, capsys):
    """simulate prints one comma-separated hex line per record"""
    path = tmp_path / "nand.jsonl"
    DatasetRepository(path).write([(aig_to_dag(nand_aig), nand_tt)])
    assert main(["simulate", "--aig", str(path)]) == 0
    assert capsys.readouterr().out.strip() == "e"


def test_simulate_missing_file(tmp_path):
    """A missing input file exits with 3"""
    assert main(["simulate", "--aig", str(tmp_path / "nope.jsonl")]) == 3


def test_simulate_malformed_file(tmp_path):
    """A malformed record exits with 3"""
    path = tmp_path / "bad.jsonl"
    path.write_text("{not json\n", encoding="utf-8")
    assert main(["simulate", "--aig", str(path)]) == 3


# ===== TRAIN TESTS =====


def test_train_writes_checkpoint(tmp_path, dataset_path):
    """Flags override the config file"""
    config = tmp_path / "tiny.yaml"
    config.write_text(
        "T: 10\nbeta: 5.0\nlayers: 1\nhidden: 8\nhidden_e: 8\nhidden_y: 8\nheads: 2\n"
        "time_dim: 4\nepochs: 5\n",
        encoding="utf-8",
    )
    out = tmp_path / "run" / "model.ckpt"
    argv = ["train", "--config", str(config), "--data", str(dataset_path), "--out", str(out),
            "--epochs", "1", "--lambda", "0.5", "--threads", "1"]
    assert main(argv) == 0
    assert out.exists()
    rows = (tmp_path / "run" / "model.ckpt.metrics.csv").read_text().splitlines()
    assert len(rows) == 2


def test_train_missing_data(tmp_path):
    """A missing training file exits with 3"""
    argv = ["train", "--data", str(tmp_path / "none.jsonl"), "--out", str(tmp_path / "m.ckpt")]
    assert main(argv) == 3


def test_train_invalid_schedule(tmp_path, dataset_path):
    """β >= T is a configuration error"""
    argv = ["train", "--data", str(dataset_path), "--out", str(tmp_path / "m.ckpt"),
            "--T", "5", "--beta", "5"]
    assert main(argv) == 2


def test_train_config_not_a_mapping(tmp_path, dataset_path):
    """A config file holding a list exits with 2"""
    config = tmp_path / "list.yaml"
    config.write_text("- 1\n- 2\n", encoding="utf-8")
    argv = ["train", "--config", str(config), "--data", str(dataset_path),
            "--out", str(tmp_path / "m.ckpt")]
    assert main(argv) == 2


def test_train_bad_thread_count(tmp_path, dataset_path):
    """Zero threads is rejected before training"""
    argv = ["train", "--data", str(dataset_path), "--out", str(tmp_path / "m.ckpt"),
            "--threads", "0"]
    assert main(argv) == 2


def test_missing_required_flag():
    """argparse rejects a missing required flag with status 2"""
    with pytest.raises(SystemExit) as info:
        main(["train", "--out", "x.ckpt"])
    assert info.value.code == 2


# ===== SAMPLE TESTS =====


def test_sample_writes_records_and_dot(tmp_path, checkpoint, circuits):
    """--num graphs per condition, each with levels and a DOT file"""
    _, tt = circuits[0]
    out = tmp_path / "samples.jsonl"
    prefix = tmp_path / "dot" / "g"
    prefix.parent.mkdir()
    argv = ["sample", "--ckpt", str(checkpoint), "--tt", ",".join(tt.to_hex()),
            "--num", "3", "--out", str(out), "--dot", str(prefix)]
    assert main(argv) == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 3
    assert all("levels" in json.loads(line) for line in lines)
    assert sorted(p.name for p in prefix.parent.iterdir()) == ["g_0.dot", "g_1.dot", "g_2.dot"]


def test_sample_conditions_from_file(tmp_path, checkpoint, dataset_path, circuits):
    """A JSONL --tt supplies one condition per record"""
    out = tmp_path / "samples.jsonl"
    argv = ["sample", "--ckpt", str(checkpoint), "--tt", str(dataset_path),
            "--num", "1", "--out", str(out)]
    assert main(argv) == 0
    assert len(DatasetRepository(out).read_all()) == len(circuits)


def test_sample_ambiguous_hex(tmp_path, checkpoint):
    """A single hex digit needs --n-inputs"""
    argv = ["sample", "--ckpt", str(checkpoint), "--tt", "e", "--out", str(tmp_path / "s.jsonl")]
    assert main(argv) == 2


def test_sample_corrupt_checkpoint(tmp_path):
    """An unreadable checkpoint exits with 3"""
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"NOTACKPT" + bytes(16))
    argv = ["sample", "--ckpt", str(bad), "--tt", "e", "--n-inputs", "2",
            "--out", str(tmp_path / "s.jsonl")]
    assert main(argv) == 3


def test_infer_n_inputs():
    """Hex width determines the input count from three inputs up"""
    assert infer_n_inputs(["d3"]) == 3
    assert infer_n_inputs(["0123456789abcdef"]) == 6
    with pytest.raises(UsageError):
        infer_n_inputs(["abc"])


# ===== REFINE TESTS =====


def test_refine_reaches_target(tmp_path, and_path, capsys):
    """Refining a ∧ b towards NAND reports a perfect circuit"""
    out = tmp_path / "refined.jsonl"
    argv = ["refine", "--aig", str(and_path), "--tt", "e", "--sims", "50", "--steps", "5",
            "--seed", "0", "--out", str(out)]
    assert main(argv) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["reward_before"] == 0.0
    assert report["reward_after"] == 1.0
    assert report["improved"] is True
    ((_, tt),) = DatasetRepository(out).read_all()
    assert tt.to_hex() == ["e"]


def test_refine_parallel_mode(and_path, capsys):
    """--mode parallel runs threaded simulations and never regresses"""
    argv = ["refine", "--aig", str(and_path), "--tt", "e", "--sims", "8", "--steps", "2",
            "--mode", "parallel", "--workers", "2"]
    assert main(argv) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["reward_after"] >= report["reward_before"]


def test_refine_defaults_to_own_function(and_path, capsys):
    """Without --tt the record's own function is already met"""
    assert main(["refine", "--aig", str(and_path), "--sims", "2", "--steps", "1"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["reward_after"] == 1.0 and report["improved"] is False


def test_refine_width_mismatch(and_path):
    """A condition of another width is a usage error"""
    assert main(["refine", "--aig", str(and_path), "--tt", "d3"]) == 2


# ===== EVAL TESTS =====


def test_eval_writes_report_and_histogram(tmp_path, checkpoint, dataset_path, capsys):
    """eval prints the headline metrics and writes both artifacts"""
    report = tmp_path / "eval" / "report.json"
    argv = ["eval", "--ckpt", str(checkpoint), "--test", str(dataset_path), "--k", "1",
            "--report", str(report)]
    assert main(argv) == 0
    headline = json.loads(capsys.readouterr().out)
    assert set(headline) == {"validity", "accuracy", "level_emd"}
    assert report.exists()
    assert (tmp_path / "eval" / "report.levels.csv").exists()


def test_eval_baseline(tmp_path, checkpoint, dataset_path):
    """The random-wiring baseline is tagged in the report"""
    report = tmp_path / "baseline.json"
    argv = ["eval", "--ckpt", str(checkpoint), "--test", str(dataset_path), "--k", "1",
            "--report", str(report), "--baseline"]
    assert main(argv) == 0
    assert "baseline" in json.loads(report.read_text())["metadata"]


def test_eval_generalization(tmp_path, checkpoint):
    """Random conditions of an unseen width can be evaluated"""
    report = tmp_path / "gen.json"
    argv = ["eval", "--ckpt", str(checkpoint), "--k", "1", "--report", str(report),
            "--gen-n-inputs", "4", "--gen-count", "2", "--gen-max-gates", "12"]
    assert main(argv) == 0
    assert json.loads(report.read_text())["metadata"]["generalization_n_inputs"] == 4


def test_eval_needs_conditions(tmp_path, checkpoint):
    """eval without --test or --gen-n-inputs is a usage error"""
    with pytest.raises(SystemExit) as info:
        main(["eval", "--ckpt", str(checkpoint), "--report", str(tmp_path / "r.json")])
    assert info.value.code == 2


# ===== SELFTEST TESTS =====


def test_selftest_single_suite(capsys):
    """A named suite runs alone and passes"""
    assert main(["selftest", "--suite", "schedule"]) == 0
    assert capsys.readouterr().out.startswith("PASS schedule")


def test_selftest_unknown_suite():
    """Unknown suite names are rejected by argparse"""
    with pytest.raises(SystemExit) as info:
        main(["selftest", "--suite", "nope"])
    assert info.value.code == 2
