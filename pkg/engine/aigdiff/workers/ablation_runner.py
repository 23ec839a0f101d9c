"""
Ablation worker.

Trains the full configuration and one variant with shared seeds, evaluates
both on the same test conditions and writes the paired report:

  no-cond   variant: lambda = 0 (condition loss removed)
  one-shot  variant: beta = 0 (every element follows the global timestep)

Usage:
  python -m aigdiff.workers.ablation_runner --config engine/configs/desk_scale.json \
      --data data/train.jsonl --test data/train.test.jsonl --toggle lambda --out runs/ablation
"""

import argparse
import logging
from pathlib import Path
from typing import Any, Dict, Optional, Union

from aigdiff.models.configs import TrainConfig, load_config_file
from aigdiff.models.reports import AblationReport
from aigdiff.repositories.dataset_repository import DatasetRepository
from aigdiff.services.evaluator import DEFAULT_K, evaluate_checkpoint
from aigdiff.services.trainer import train_loop

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

TOGGLES: Dict[str, Dict[str, Any]] = {
    "lambda": {"lambda_cond": 0.0},
    "beta": {"beta": 0.0},
}


class AblationRunner:
    """Paired full / variant training and evaluation."""

    def __init__(self, base: TrainConfig, out_dir: PathLike, k: int = DEFAULT_K, seed: int = 0):
        self.base = base
        self.out_dir = Path(out_dir)
        self.k = k
        self.seed = seed

    def variant_config(self, toggle: str) -> TrainConfig:
        """
        The base config with exactly one setting changed.

        Raises:
            ValueError: On an unknown toggle or a toggle the base already has
        """
        if toggle not in TOGGLES:
            raise ValueError(
                f"Unknown ablation toggle '{toggle}' (expected one of {list(TOGGLES)})"
            )
        update = TOGGLES[toggle]
        if all(getattr(self.base, key) == value for key, value in update.items()):
            raise ValueError(f"Base config already has {update}; nothing to ablate")
        return self.base.model_copy(update=update)

    def run(
        self,
        toggle: str,
        data_path: PathLike,
        test_path: PathLike,
        val_path: Optional[PathLike] = None,
    ) -> AblationReport:
        variant = self.variant_config(toggle)
        self.out_dir.mkdir(parents=True, exist_ok=True)

        logger.info(f"[Ablation] Training full model and '{toggle}' variant -> {self.out_dir}")
        full_ckpt = train_loop(self.base, data_path, self.out_dir / "full.ckpt", val_path)
        variant_ckpt = train_loop(
            variant, data_path, self.out_dir / f"no_{toggle}.ckpt", val_path
        )

        full = evaluate_checkpoint(full_ckpt.checkpoint_path, test_path, self.k, self.seed)
        other = evaluate_checkpoint(variant_ckpt.checkpoint_path, test_path, self.k, self.seed)
        conditions = [tt.to_hex() for _, tt in DatasetRepository(test_path).read_all()]

        report = AblationReport(toggle=toggle, conditions=conditions, full=full, variant=other)
        path = self.out_dir / f"ablation_{toggle}.json"
        path.write_text(report.model_dump_json(indent=2), encoding="utf-8")
        logger.info(
            f"[Ablation] {toggle}: accuracy {full.accuracy:.4f} vs {other.accuracy:.4f}, "
            f"level_emd {full.level_emd:.4f} vs {other.level_emd:.4f} -> {path}"
        )
        return report


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="Paired ablation training and evaluation")
    parser.add_argument("--config", type=Path, help="JSON/YAML TrainConfig file")
    parser.add_argument("--data", type=Path, required=True)
    parser.add_argument("--test", type=Path, required=True)
    parser.add_argument("--val", type=Path)
    parser.add_argument("--toggle", choices=sorted(TOGGLES), required=True)
    parser.add_argument("--out", type=Path, required=True, help="Output directory")
    parser.add_argument("--k", type=int, default=DEFAULT_K)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    logging.basicConfig(
        level=logging.INFO,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    )
    base = TrainConfig.model_validate(load_config_file(args.config) if args.config else {})
    runner = AblationRunner(base, args.out, args.k, args.seed)
    runner.run(args.toggle, args.data, args.test, args.val)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
