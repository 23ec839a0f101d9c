"""
aigdiff command line.

Subcommands: gen-data, train, sample, refine, simulate, eval, selftest.
Exit status: 0 ok, 1 failed selftest, 2 bad arguments or config,
3 I/O or data format, 4 numerical or graph failure.
"""

import argparse
import json
import logging
import math
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
import torch
import yaml
from dotenv import load_dotenv
from pydantic import ValidationError

from aigdiff.config import get_config
from aigdiff.exceptions import AigDiffError, exit_code_for
from aigdiff.models.aig import Aig, TruthTable, aig_to_dag, canonicalize, simulate
from aigdiff.models.configs import MctsConfig, TrainConfig, load_config_file, merge_overrides
from aigdiff.models.reports import RefineReport
from aigdiff.repositories.checkpoint_repository import CheckpointRepository
from aigdiff.repositories.dataset_repository import DatasetRepository, record_from_graph
from aigdiff.services.aig_parser import parse_dag_to_aig
from aigdiff.services.evaluator import (
    DEFAULT_K,
    evaluate,
    evaluate_checkpoint,
    generalization_conditions,
    histogram_csv_path,
    write_histogram_csv,
    write_report,
)
from aigdiff.services.level_structure import LevelStructureStats
from aigdiff.services.mcts import mcts_refine, reward
from aigdiff.services.sampler import MarginalDenoiser, reverse_sample
from aigdiff.services.selftest import SUITES, run_selftest
from aigdiff.services.trainer import train_loop
from aigdiff.utils.aig_generator import random_aig
from aigdiff.utils.dot_export import to_dot

logger = logging.getLogger("aigdiff.cli")

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


class UsageError(Exception):
    """Bad flag values or config content (exit 2)."""


# ===== Helpers =====


def configure_logging() -> None:
    config = get_config()
    handlers: List[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    if config.log_file:
        handlers.append(logging.FileHandler(config.log_file, encoding="utf-8"))
    logging.basicConfig(level=config.log_level, format=LOG_FORMAT, handlers=handlers, force=True)


def resolve_threads(flag: Optional[int]) -> int:
    threads = flag if flag is not None else get_config().threads
    if threads < 1:
        raise UsageError(f"--threads must be >= 1, got {threads}")
    torch.set_num_threads(threads)
    return threads


def require_file(path: Path, flag: str) -> Path:
    if not path.is_file():
        raise FileNotFoundError(f"{flag}: no such file: {path}")
    return path


def infer_n_inputs(hex_columns: Sequence[str]) -> int:
    digits = len(hex_columns[0])
    if digits == 1:
        raise UsageError("one hex digit fits 0, 1 or 2 inputs; pass --n-inputs")
    n_in = int(round(math.log2(digits * 4)))
    if 4 * digits != 1 << n_in:
        raise UsageError(f"{digits} hex digits is not a whole truth table; pass --n-inputs")
    return n_in


def load_conditions(tt: str, n_inputs: Optional[int]) -> List[TruthTable]:
    """--tt as comma-separated hex columns, or a JSONL file whose records carry conditions."""
    path = Path(tt)
    if path.is_file():
        return [table for _, table in DatasetRepository(path).read()]
    columns = [c.strip() for c in tt.split(",") if c.strip()]
    if not columns:
        raise UsageError("--tt is empty")
    n_in = n_inputs if n_inputs is not None else infer_n_inputs(columns)
    try:
        return [TruthTable.from_hex(n_in, columns)]
    except ValueError as exc:
        raise UsageError(f"--tt: {exc}") from exc


def load_aig(path: Path, index: int = 0) -> Aig:
    """Circuit of the index-th record of a JSONL file."""
    require_file(path, "--aig")
    for position, (dag, tt) in enumerate(DatasetRepository(path).read()):
        if position == index:
            return parse_dag_to_aig(dag, np.random.default_rng(0), tt.n_in)
    raise UsageError(f"{path} has no record {index}")


def train_config_from(args: argparse.Namespace) -> TrainConfig:
    base: Dict[str, Any] = load_config_file(args.config) if args.config else {}
    overrides = {
        "epochs": args.epochs,
        "batch_size": args.batch_size,
        "seed": args.seed,
        "threads": args.threads,
        "lambda": args.lambda_cond,
        "beta": args.beta,
        "T": args.T,
    }
    if "lambda_cond" in base and args.lambda_cond is not None:
        base.pop("lambda_cond")
    return TrainConfig.model_validate(merge_overrides(base, overrides))


def mcts_config_from(args: argparse.Namespace) -> MctsConfig:
    base: Dict[str, Any] = load_config_file(args.config) if args.config else {}
    overrides = {
        "simulations": args.sims,
        "steps": args.steps,
        "rollout_depth": args.rollout_depth,
        "mode": args.mode,
        "workers": args.workers,
        "seed": args.seed,
    }
    return MctsConfig.model_validate(merge_overrides(base, overrides))


# ===== Subcommands =====


def cmd_gen_data(args: argparse.Namespace) -> int:
    """Random AIG dataset with optional validation/test splits and a level-stats sidecar."""
    rng = np.random.default_rng(args.seed)
    out = Path(args.out)

    def draw(count: int):
        examples = []
        for _ in range(count):
            aig, tt = random_aig(args.n_inputs, args.n_outputs, args.max_gates, rng)
            examples.append((aig_to_dag(canonicalize(aig)), tt))
        return examples

    train = draw(args.count)
    repository = DatasetRepository(out)
    repository.write(train)
    repository.write_stats(LevelStructureStats.estimate(dag for dag, _ in train))
    for name, count in (("val", args.val_count), ("test", args.test_count)):
        if count:
            split = out.with_name(f"{out.stem}.{name}{out.suffix}")
            DatasetRepository(split).write(draw(count))

    mean_nodes = float(np.mean([dag.n for dag, _ in train])) if train else 0.0
    logger.info(f"[GenData] {len(train)} graphs, mean node count {mean_nodes:.2f} -> {out}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    config = train_config_from(args)
    config = config.model_copy(update={"threads": resolve_threads(config.threads)})
    require_file(Path(args.data), "--data")
    if args.val:
        require_file(Path(args.val), "--val")
    result = train_loop(config, args.data, args.out, args.val)
    logger.info(f"[Train] Checkpoint {result.checkpoint_path}, metrics {result.metrics_path}")
    return 0


def cmd_sample(args: argparse.Namespace) -> int:
    resolve_threads(args.threads)
    checkpoint = CheckpointRepository(require_file(Path(args.ckpt), "--ckpt")).load()
    noise = checkpoint.noise_model()
    stats = checkpoint.level_stats()
    conditions = load_conditions(args.tt, args.n_inputs)
    rng = np.random.default_rng(args.seed)

    samples = []
    for cond in conditions:
        for _ in range(args.num):
            samples.append((reverse_sample(checkpoint.model, cond, stats, noise, rng), cond))

    DatasetRepository(args.out).write(samples, include_levels=True)
    if args.dot:
        for k, (dag, _) in enumerate(samples):
            Path(f"{args.dot}_{k}.dot").write_text(to_dot(dag), encoding="utf-8")
    logger.info(f"[Sample] {len(samples)} graphs for {len(conditions)} conditions -> {args.out}")
    return 0


def cmd_refine(args: argparse.Namespace) -> int:
    start = load_aig(Path(args.aig), args.index)
    if args.tt:
        (cond,) = load_conditions(args.tt, args.n_inputs if args.n_inputs else start.n_in)[:1]
    else:
        cond = simulate(start)
    if cond.n_in != start.n_in or cond.n_out != start.n_out:
        raise UsageError(
            f"condition has {cond.n_in} inputs / {cond.n_out} outputs, circuit has "
            f"{start.n_in} / {start.n_out}"
        )
    config = mcts_config_from(args)
    refined = mcts_refine(start, cond, config, np.random.default_rng(config.seed))

    before, after = reward(start, cond), reward(refined, cond)
    record = record_from_graph(aig_to_dag(refined), cond)
    report = RefineReport(
        tt=cond.to_hex(),
        reward_before=before,
        reward_after=after,
        improved=after > before,
        record=record.model_dump(exclude_none=True),
    )
    if args.out:
        DatasetRepository(args.out).write_records([record])
    print(report.model_dump_json())
    return 0


def cmd_simulate(args: argparse.Namespace) -> int:
    require_file(Path(args.aig), "--aig")
    for dag, tt in DatasetRepository(args.aig).read():
        aig = parse_dag_to_aig(dag, np.random.default_rng(0), tt.n_in)
        print(",".join(simulate(aig).to_hex()))
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    resolve_threads(args.threads)
    require_file(Path(args.ckpt), "--ckpt")
    if args.gen_n_inputs is not None:
        checkpoint = CheckpointRepository(args.ckpt).load()
        rng = np.random.default_rng(args.seed)
        conditions, reference = generalization_conditions(
            args.gen_n_inputs, args.gen_n_outputs, args.gen_max_gates, args.gen_count, rng
        )
        denoiser = MarginalDenoiser() if args.baseline else checkpoint.model
        report = evaluate(
            denoiser,
            conditions,
            checkpoint.level_stats(),
            checkpoint.noise_model(),
            rng,
            k=args.k,
            reference=reference,
        )
        report.metadata["generalization_n_inputs"] = args.gen_n_inputs
    elif args.baseline:
        require_file(Path(args.test), "--test")
        checkpoint = CheckpointRepository(args.ckpt).load()
        examples = DatasetRepository(args.test).read_all()
        report = evaluate(
            MarginalDenoiser(),
            [tt for _, tt in examples],
            checkpoint.level_stats(),
            checkpoint.noise_model(),
            np.random.default_rng(args.seed),
            k=args.k,
            reference=[dag for dag, _ in examples],
        )
        report.metadata["baseline"] = "random-wiring (edge marginal)"
    else:
        require_file(Path(args.test), "--test")
        report = evaluate_checkpoint(args.ckpt, args.test, args.k, args.seed)

    write_report(report, args.report)
    write_histogram_csv(report, histogram_csv_path(args.report))
    print(json.dumps({"validity": report.validity, "accuracy": report.accuracy,
                      "level_emd": report.level_emd}))
    return 0


def cmd_selftest(args: argparse.Namespace) -> int:
    results = run_selftest(args.suite)
    for result in results:
        status = "PASS" if result.passed else "FAIL"
        print(f"{status} {result.name} ({result.seconds:.2f}s) {result.detail}".rstrip())
    return 0 if all(r.passed for r in results) else 1


# ===== Parser =====


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aigdiff", description="Level-scheduled discrete diffusion for AIG synthesis"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-data", help="Generate a random AIG dataset")
    gen.add_argument("--n-inputs", type=int, default=8)
    gen.add_argument("--n-outputs", type=int, default=2)
    gen.add_argument("--max-gates", type=int, default=32)
    gen.add_argument("--count", type=int, default=12950)
    gen.add_argument("--val-count", type=int, default=0)
    gen.add_argument("--test-count", type=int, default=0)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", type=Path, required=True)
    gen.set_defaults(handler=cmd_gen_data)

    train = sub.add_parser("train", help="Train a denoiser")
    train.add_argument("--config", type=Path, help="JSON/YAML TrainConfig file")
    train.add_argument("--data", type=Path, required=True)
    train.add_argument("--val", type=Path)
    train.add_argument("--out", type=Path, required=True, help="Checkpoint path")
    train.add_argument("--epochs", type=int)
    train.add_argument("--batch-size", type=int)
    train.add_argument("--seed", type=int)
    train.add_argument("--lambda", dest="lambda_cond", type=float)
    train.add_argument("--beta", type=float)
    train.add_argument("--T", type=int)
    train.add_argument("--threads", type=int)
    train.set_defaults(handler=cmd_train)

    sample = sub.add_parser("sample", help="Sample graphs for truth-table conditions")
    sample.add_argument("--ckpt", type=Path, required=True)
    sample.add_argument("--tt", required=True, help="Hex columns (comma-separated) or JSONL path")
    sample.add_argument("--n-inputs", type=int)
    sample.add_argument("--num", type=int, default=10)
    sample.add_argument("--out", type=Path, required=True)
    sample.add_argument("--dot", help="Write PREFIX_k.dot per sample")
    sample.add_argument("--seed", type=int, default=0)
    sample.add_argument("--threads", type=int)
    sample.set_defaults(handler=cmd_sample)

    refine = sub.add_parser("refine", help="MCTS refinement of one circuit")
    refine.add_argument("--aig", type=Path, required=True, help="JSONL record file")
    refine.add_argument("--index", type=int, default=0, help="Record index in --aig")
    refine.add_argument("--tt", help="Target hex columns or JSONL path (default: record's own)")
    refine.add_argument("--n-inputs", type=int)
    refine.add_argument("--config", type=Path, help="JSON/YAML MctsConfig file")
    refine.add_argument("--sims", type=int)
    refine.add_argument("--steps", type=int)
    refine.add_argument("--rollout-depth", type=int)
    refine.add_argument("--mode", choices=["serial", "parallel"], help="Simulation mode")
    refine.add_argument("--workers", type=int, help="Threads in parallel mode")
    refine.add_argument("--seed", type=int)
    refine.add_argument("--out", type=Path, help="Write the refined record here")
    refine.set_defaults(handler=cmd_refine)

    sim = sub.add_parser("simulate", help="Print the truth table of each circuit record")
    sim.add_argument("--aig", type=Path, required=True)
    sim.set_defaults(handler=cmd_simulate)

    ev = sub.add_parser("eval", help="Best-of-K evaluation")
    ev.add_argument("--ckpt", type=Path, required=True)
    ev.add_argument("--test", type=Path)
    ev.add_argument("--k", type=int, default=DEFAULT_K)
    ev.add_argument("--report", type=Path, required=True)
    ev.add_argument("--seed", type=int, default=0)
    ev.add_argument("--baseline", action="store_true", help="Random-wiring baseline denoiser")
    ev.add_argument("--gen-n-inputs", type=int, help="Evaluate on random circuits of this width")
    ev.add_argument("--gen-n-outputs", type=int, default=1)
    ev.add_argument("--gen-max-gates", type=int, default=12)
    ev.add_argument("--gen-count", type=int, default=50)
    ev.add_argument("--threads", type=int)
    ev.set_defaults(handler=cmd_eval)

    st = sub.add_parser("selftest", help="Run the oracle and property suites")
    st.add_argument("--suite", action="append", choices=sorted(SUITES))
    st.set_defaults(handler=cmd_selftest)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    load_dotenv()
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging()

    if args.command == "eval" and args.test is None and args.gen_n_inputs is None:
        parser.error("eval needs --test or --gen-n-inputs")

    try:
        return args.handler(args)
    except (UsageError, ValidationError) as exc:
        logger.error(f"{args.command}: {exc}")
        return 2
    except (AigDiffError, OSError) as exc:
        logger.error(f"{args.command}: {exc}")
        return exit_code_for(exc)
    except (ValueError, yaml.YAMLError) as exc:
        logger.error(f"{args.command}: bad configuration ({exc})")
        return 2
