"""
Unit tests for services/evaluator.py

Tests cover:
- Level histograms and EMD
- Best-of-K evaluation with oracle and baseline denoisers
- Report and histogram writers
- Checkpoint evaluation
"""

import csv
import json

import numpy as np
import pytest

from aigdiff.models.reports import EvalReport
from aigdiff.services.evaluator import (
    evaluate,
    evaluate_checkpoint,
    generalization_conditions,
    histogram_csv_path,
    level_emd,
    level_histogram,
    write_histogram_csv,
    write_report,
)
from aigdiff.services.level_structure import LevelStructureStats
from aigdiff.services.sampler import MarginalDenoiser, OracleDenoiser
from aigdiff.services.selftest import noise_for, tiny_train_config
from aigdiff.services.trainer import train_loop


# ===== HISTOGRAM TESTS =====


def test_level_histogram_counts():
    """Histogram keys are sorted levels"""
    assert level_histogram([3, 1, 3, 2]) == {1: 1, 2: 1, 3: 2}
    assert level_histogram([]) == {}


def test_level_emd_identical_is_zero():
    """Equal histograms are at distance zero"""
    assert level_emd({2: 3, 4: 1}, {2: 3, 4: 1}) == 0.0


def test_level_emd_normalizes_counts():
    """Only the shape of a histogram matters"""
    assert level_emd({2: 1, 4: 1}, {2: 5, 4: 5}) == pytest.approx(0.0)


def test_level_emd_shift_and_symmetry():
    """Moving all mass by two levels costs two"""
    assert level_emd({1: 4}, {3: 2}) == pytest.approx(2.0)
    a, b = {1: 1, 2: 3}, {2: 1, 5: 1}
    assert level_emd(a, b) == pytest.approx(level_emd(b, a))


def test_level_emd_empty_side():
    """A missing histogram contributes no distance"""
    assert level_emd({}, {1: 1}) == 0.0


# ===== EVALUATION TESTS =====


def test_oracle_evaluation_is_perfect(circuits, rng):
    """A ground-truth denoiser scores full validity and accuracy"""
    dag, tt = circuits[0]
    noise = noise_for([dag], T=10, beta=5.0)
    stats = LevelStructureStats.estimate([dag])
    report = evaluate(OracleDenoiser(dag), [tt], stats, noise, rng, k=2, reference=[dag])
    assert report.validity == 1.0
    assert report.accuracy == 1.0
    assert report.level_emd == 0.0
    assert report.histograms.sample == {dag.max_level: 1}
    case = report.cases[0]
    assert case.accuracies == [1.0, 1.0]
    assert case.tt == tt.to_hex()


def test_more_samples_never_hurt(circuits, stats, noise):
    """Best-of-K accuracy is monotone in K for a fixed stream"""
    conditions = [tt for _, tt in circuits[:4]]
    one = evaluate(MarginalDenoiser(), conditions, stats, noise, np.random.default_rng(9), k=1)
    four = evaluate(MarginalDenoiser(), conditions, stats, noise, np.random.default_rng(9), k=4)
    for small, large in zip(one.cases, four.cases):
        assert large.accuracies[0] == small.accuracies[0]
        assert large.best_accuracy >= small.best_accuracy
    assert four.accuracy >= one.accuracy


def test_evaluation_metadata(circuits, stats, noise, rng):
    """Reports record the sampling setup"""
    conditions = [tt for _, tt in circuits[:2]]
    report = evaluate(MarginalDenoiser(), conditions, stats, noise, rng, k=1)
    assert report.metadata["k"] == 1
    assert report.metadata["conditions"] == 2
    assert report.metadata["T"] == 10 and report.metadata["mode"] == "bottom-up"
    assert 0.0 <= report.validity <= 1.0
    assert report.histograms.reference == {}


def test_evaluate_rejects_bad_arguments(stats, noise, nand_tt, rng):
    """Conditions must be non-empty and K positive"""
    with pytest.raises(ValueError):
        evaluate(MarginalDenoiser(), [], stats, noise, rng)
    with pytest.raises(ValueError):
        evaluate(MarginalDenoiser(), [nand_tt], stats, noise, rng, k=0)


def test_generalization_conditions(rng):
    """Held-out widths come with reference graphs"""
    conditions, reference = generalization_conditions(4, 2, 14, 5, rng)
    assert len(conditions) == len(reference) == 5
    assert all(tt.n_in == 4 and tt.n_out == 2 for tt in conditions)


# ===== WRITER TESTS =====


def _report(circuits, stats, noise):
    conditions = [tt for _, tt in circuits[:3]]
    return evaluate(
        MarginalDenoiser(),
        conditions,
        stats,
        noise,
        np.random.default_rng(0),
        k=1,
        reference=[dag for dag, _ in circuits],
    )


def test_write_report_round_trip(tmp_path, circuits, stats, noise):
    """The JSON report validates back into an EvalReport"""
    report = _report(circuits, stats, noise)
    path = write_report(report, tmp_path / "out" / "report.json")
    loaded = EvalReport.model_validate_json(path.read_text(encoding="utf-8"))
    assert loaded.accuracy == report.accuracy
    assert len(loaded.cases) == 3
    assert set(json.loads(path.read_text())) >= {"validity", "accuracy", "level_emd"}


def test_histogram_csv(tmp_path, circuits, stats, noise):
    """Every level present on either side gets a row"""
    report = _report(circuits, stats, noise)
    path = write_histogram_csv(report, histogram_csv_path(tmp_path / "report.json"))
    assert path.name == "report.levels.csv"
    with path.open(newline="") as handle:
        rows = list(csv.reader(handle))
    assert rows[0] == ["level", "sample", "reference"]
    levels = set(report.histograms.sample) | set(report.histograms.reference)
    assert [int(row[0]) for row in rows[1:]] == sorted(levels)
    assert sum(int(row[2]) for row in rows[1:]) == len(circuits)
    assert sum(int(row[1]) for row in rows[1:]) == 3


# ===== CHECKPOINT EVALUATION TESTS =====


def test_evaluate_checkpoint(tmp_path, dataset_path, circuits):
    """A trained checkpoint is evaluated on a JSONL test set"""
    config = tiny_train_config(epochs=1, batch_size=5)
    result = train_loop(config, dataset_path, tmp_path / "model.ckpt")
    report = evaluate_checkpoint(result.checkpoint_path, dataset_path, k=1, seed=3)
    assert len(report.cases) == len(circuits)
    assert report.metadata["seed"] == 3
    assert report.metadata["checkpoint"].endswith("model.ckpt")
    assert sum(report.histograms.reference.values()) == len(circuits)
