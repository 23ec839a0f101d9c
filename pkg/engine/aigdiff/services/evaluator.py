"""
Evaluator Service

Best-of-K evaluation of a denoiser on truth-table conditions:

- validity: gates with the right fan-in over all raw samples (pooled, before parsing)
- accuracy: mean over conditions of the best function accuracy after parsing
- level histograms: max level of each best parsed circuit against the reference graphs
- level_emd: 1-D earth mover's distance between the normalized histograms
"""

import csv
import logging
from collections import Counter
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.stats import wasserstein_distance

from aigdiff.models.aig import (
    TruthTable,
    aig_to_dag,
    function_accuracy,
    gate_validity_counts,
    simulate,
)
from aigdiff.models.dag import Dag
from aigdiff.models.reports import CaseRecord, EvalReport, Histograms
from aigdiff.repositories.checkpoint_repository import CheckpointRepository
from aigdiff.repositories.dataset_repository import DatasetRepository
from aigdiff.services.aig_parser import parse_dag_to_aig
from aigdiff.services.level_structure import LevelStructureStats
from aigdiff.services.noise_model import NoiseModel
from aigdiff.services.sampler import Denoiser, reverse_sample
from aigdiff.utils.aig_generator import random_aig

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
DEFAULT_K = 10


def level_histogram(max_levels: Iterable[int]) -> Dict[int, int]:
    return dict(sorted(Counter(int(v) for v in max_levels).items()))


def level_emd(a: Dict[int, int], b: Dict[int, int]) -> float:
    """Wasserstein-1 distance between two level histograms after normalization."""
    if not a or not b:
        return 0.0
    levels_a, counts_a = zip(*sorted(a.items()))
    levels_b, counts_b = zip(*sorted(b.items()))
    return float(wasserstein_distance(levels_a, levels_b, counts_a, counts_b))


def case_streams(rng: np.random.Generator, count: int) -> List[np.random.Generator]:
    """Independent per-condition streams drawn in a fixed order."""
    seeds = rng.integers(0, 2**63 - 1, size=count)
    return [np.random.default_rng(int(s)) for s in seeds]


def evaluate_case(
    denoiser: Denoiser,
    cond: TruthTable,
    stats: LevelStructureStats,
    noise: NoiseModel,
    k: int,
    rng: np.random.Generator,
    index: int = 0,
) -> CaseRecord:
    """Sample K graphs for one condition and keep the most accurate parsed circuit."""
    accuracies: List[float] = []
    correct = total = 0
    best_level = 0
    best = -1.0
    for _ in range(k):
        raw = reverse_sample(denoiser, cond, stats, noise, rng)
        good, gates = gate_validity_counts(raw)
        correct += good
        total += gates
        aig = parse_dag_to_aig(raw, rng, cond.n_in)
        accuracy = function_accuracy(simulate(aig), cond)
        accuracies.append(accuracy)
        if accuracy > best:
            best = accuracy
            best_level = int(aig.levels().max(initial=0))
    return CaseRecord(
        index=index,
        tt=cond.to_hex(),
        n_in=cond.n_in,
        accuracies=accuracies,
        best_accuracy=max(best, 0.0),
        correct_gates=correct,
        total_gates=total,
        max_level=best_level,
    )


def evaluate(
    denoiser: Denoiser,
    conditions: Sequence[TruthTable],
    stats: LevelStructureStats,
    noise: NoiseModel,
    rng: np.random.Generator,
    k: int = DEFAULT_K,
    reference: Optional[Sequence[Dag]] = None,
) -> EvalReport:
    """
    Evaluate a denoiser on a set of conditions.

    Args:
        denoiser: Trained model, oracle or baseline
        conditions: Non-empty list of target truth tables
        stats: Level-structure statistics for sampling
        noise: Noise process matching the denoiser
        rng: Random stream; each condition gets its own child stream
        k: Samples per condition
        reference: Ground-truth graphs for the reference level histogram

    Returns:
        EvalReport
    """
    if not conditions:
        raise ValueError("evaluate needs at least one condition")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")

    cases = [
        evaluate_case(denoiser, cond, stats, noise, k, stream, index)
        for index, (cond, stream) in enumerate(zip(conditions, case_streams(rng, len(conditions))))
    ]
    correct = sum(c.correct_gates for c in cases)
    total = sum(c.total_gates for c in cases)
    sample_hist = level_histogram(c.max_level for c in cases)
    reference_hist = level_histogram(g.max_level for g in reference or [])

    report = EvalReport(
        validity=correct / total if total else 1.0,
        accuracy=float(np.mean([c.best_accuracy for c in cases])),
        level_emd=level_emd(sample_hist, reference_hist),
        histograms=Histograms(sample=sample_hist, reference=reference_hist),
        cases=cases,
        metadata={
            "k": k,
            "conditions": len(conditions),
            "validity_pooling": "gates across all samples",
            "T": noise.T,
            "beta": noise.beta,
            "mode": noise.mode.value,
        },
    )
    logger.info(
        f"[Evaluator] {len(cases)} conditions, K={k}: validity={report.validity:.4f} "
        f"accuracy={report.accuracy:.4f} level_emd={report.level_emd:.4f}"
    )
    return report


def evaluate_checkpoint(
    checkpoint_path: PathLike,
    test_path: PathLike,
    k: int = DEFAULT_K,
    seed: int = 0,
) -> EvalReport:
    """Evaluate a saved checkpoint on a JSONL test set (conditions and reference levels)."""
    checkpoint = CheckpointRepository(checkpoint_path).load()
    examples = DatasetRepository(test_path).read_all()
    report = evaluate(
        checkpoint.model,
        [tt for _, tt in examples],
        checkpoint.level_stats(),
        checkpoint.noise_model(),
        np.random.default_rng(seed),
        k=k,
        reference=[dag for dag, _ in examples],
    )
    report.metadata["checkpoint"] = str(checkpoint_path)
    report.metadata["test_set"] = str(test_path)
    report.metadata["seed"] = seed
    return report


def generalization_conditions(
    n_in: int,
    n_out: int,
    max_gates: int,
    count: int,
    rng: np.random.Generator,
) -> Tuple[List[TruthTable], List[Dag]]:
    """Random circuits at an input width the model was not trained on."""
    conditions: List[TruthTable] = []
    reference: List[Dag] = []
    for _ in range(count):
        aig, tt = random_aig(n_in, n_out, max_gates, rng)
        conditions.append(tt)
        reference.append(aig_to_dag(aig))
    return conditions, reference


def write_report(report: EvalReport, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(report.model_dump_json(indent=2), encoding="utf-8")
    logger.info(f"[Evaluator] Wrote report to {path}")
    return path


def histogram_csv_path(report_path: PathLike) -> Path:
    report_path = Path(report_path)
    return report_path.with_name(report_path.stem + ".levels.csv")


def write_histogram_csv(report: EvalReport, path: PathLike) -> Path:
    """Columns: level, sample, reference (raw counts)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    sample = report.histograms.sample
    reference = report.histograms.reference
    levels = sorted(set(sample) | set(reference))
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["level", "sample", "reference"])
        for level in levels:
            writer.writerow([level, sample.get(level, 0), reference.get(level, 0)])
    return path
