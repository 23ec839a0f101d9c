"""
Trainer Service

Denoiser training with the graph cross-entropy plus the condition loss:

    for each example: t ~ U{1..T}, corrupt with local timesteps,
    predict, CE on edges (nodes only when node diffusion is on),
    soft-simulate pE against the truth table, AdamW step on the total.

train_loop owns data loading, the held-out split, per-epoch validation,
the CSV metrics log and checkpoint cadence.
"""

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import torch

from aigdiff.config import get_config
from aigdiff.exceptions import DatasetFormatError, NonFiniteActivationError, NonFiniteLossError
from aigdiff.models.aig import NodeRoster, TruthTable
from aigdiff.models.configs import TrainConfig
from aigdiff.models.dag import Dag, Permutation, permute
from aigdiff.repositories.checkpoint_repository import CheckpointRepository
from aigdiff.repositories.dataset_repository import DatasetRepository, load_stats, stats_path_for
from aigdiff.services.condition_encoder import encode_condition
from aigdiff.services.denoiser import GraphTransformer
from aigdiff.services.level_structure import LevelStructureStats
from aigdiff.services.noise_model import Mode, NoiseModel, corrupt, estimate_marginals
from aigdiff.services.objective import (
    LossBreakdown,
    condition_loss,
    graph_ce_loss,
    gumbel_sample,
    soft_simulate,
    total_loss,
)
from aigdiff.services.optimizer import AdamW, clip_grad_norm

logger = logging.getLogger(__name__)

Example = Tuple[Dag, TruthTable]
PathLike = Union[str, Path]

METRICS_SUFFIX = ".metrics.csv"
METRICS_HEADER = ["epoch", "step", "l_graph", "l_cond", "total", "val_l_graph", "val_l_cond"]
VAL_SEED_OFFSET = 1


@dataclass(frozen=True)
class PreparedItem:
    """One corrupted training example with everything the loss needs."""

    clean: Dag
    noisy: Dag
    tt: TruthTable
    roster: NodeRoster
    cond: np.ndarray
    t: int


@dataclass
class TrainResult:
    checkpoint_path: Path
    metrics_path: Path
    history: List[Dict[str, float]] = field(default_factory=list)


def metrics_path_for(out_path: PathLike) -> Path:
    out_path = Path(out_path)
    return out_path.with_name(out_path.name + METRICS_SUFFIX)


def prepare_item(
    dag: Dag,
    tt: TruthTable,
    t: int,
    noise: NoiseModel,
    rng: np.random.Generator,
) -> PreparedItem:
    """Corrupt `dag` to timestep t and encode its condition (random row padding from rng)."""
    roster = NodeRoster.from_node_types(dag.node_index, tt.n_in)
    return PreparedItem(
        clean=dag,
        noisy=corrupt(dag, t, noise, rng),
        tt=tt,
        roster=roster,
        cond=encode_condition(tt, roster, rng),
        t=int(t),
    )


def permute_item(item: PreparedItem, sigma: Permutation) -> PreparedItem:
    """Relabel every node of a prepared item (clean, noisy, roster and condition rows)."""
    return PreparedItem(
        clean=permute(item.clean, sigma),
        noisy=permute(item.noisy, sigma),
        tt=item.tt,
        roster=item.roster.permute(sigma),
        cond=sigma.apply_nodes(item.cond),
        t=item.t,
    )


def compute_losses(
    model: GraphTransformer,
    items: Sequence[PreparedItem],
    config: TrainConfig,
    noise: NoiseModel,
    generator: Optional[torch.Generator] = None,
) -> Tuple[torch.Tensor, LossBreakdown]:
    """
    Batch-mean losses for prepared items.

    Returns:
        (differentiable total, LossBreakdown of the batch means)

    Raises:
        NonFiniteLossError: Naming the first offending graph and its timestep
    """
    outputs = model.forward_graphs(
        [item.noisy for item in items],
        [item.cond for item in items],
        [item.t for item in items],
        noise,
    )
    use_cond = config.lambda_cond > 0
    graph_terms = []
    cond_terms = []
    for index, (item, (p_x, p_e)) in enumerate(zip(items, outputs)):
        l_graph = graph_ce_loss(
            p_x,
            p_e,
            item.clean.node_index,
            item.clean.edge_index,
            node_loss_enabled=noise.node_diffusion,
        )
        if use_cond:
            wiring = p_e
            if config.cond_via_gumbel:
                wiring = gumbel_sample(
                    p_e, config.gumbel_temperature, generator, straight_through=True
                )
            soft = soft_simulate(wiring, item.roster, item.clean.levels, item.clean.node_index)
            l_cond = condition_loss(item.tt, soft)
        else:
            l_cond = torch.zeros((), dtype=p_e.dtype)

        if not (torch.isfinite(l_graph) and torch.isfinite(l_cond)):
            logger.error(f"[Trainer] Non-finite loss on graph {index} at t={item.t}")
            raise NonFiniteLossError(
                f"non-finite loss (l_graph={float(l_graph)}, l_cond={float(l_cond)})",
                graph_index=index,
                t=item.t,
            )
        graph_terms.append(l_graph)
        cond_terms.append(l_cond)

    mean_graph = torch.stack(graph_terms).mean()
    mean_cond = torch.stack(cond_terms).mean()
    total = mean_graph + config.lambda_cond * mean_cond if use_cond else mean_graph
    breakdown = total_loss(float(mean_graph), float(mean_cond), config.lambda_cond)
    return total, breakdown


def train_step(
    model: GraphTransformer,
    optimizer: AdamW,
    batch: Sequence[Example],
    config: TrainConfig,
    noise: NoiseModel,
    rng: np.random.Generator,
    generator: Optional[torch.Generator] = None,
) -> LossBreakdown:
    """
    One optimization step; t is drawn per graph.

    Raises:
        ValueError: On an empty batch
        NonFiniteLossError: Before any parameter is touched
    """
    if not batch:
        raise ValueError("train_step needs a non-empty batch")
    items = [
        prepare_item(dag, tt, int(rng.integers(1, noise.T + 1)), noise, rng) for dag, tt in batch
    ]
    model.train()
    optimizer.zero_grad(set_to_none=True)
    total, breakdown = compute_losses(model, items, config, noise, generator)
    total.backward()
    clip_grad_norm(model.parameters(), config.grad_clip)
    optimizer.step()
    logger.debug(
        f"[Trainer] step l_graph={breakdown.l_graph:.4f} l_cond={breakdown.l_cond:.4f} "
        f"total={breakdown.total:.4f}"
    )
    return breakdown


def evaluate_losses(
    model: GraphTransformer,
    examples: Sequence[Example],
    config: TrainConfig,
    noise: NoiseModel,
    rng: np.random.Generator,
) -> LossBreakdown:
    """Mean held-out losses without gradient tracking."""
    if not examples:
        nan = float("nan")
        return LossBreakdown(l_graph=nan, l_cond=nan, lambda_=config.lambda_cond, total=nan)
    model.eval()
    totals = np.zeros(2)
    with torch.no_grad():
        for start in range(0, len(examples), config.batch_size):
            chunk = examples[start : start + config.batch_size]
            items = [
                prepare_item(dag, tt, int(rng.integers(1, noise.T + 1)), noise, rng)
                for dag, tt in chunk
            ]
            scoring = config.model_copy(update={"lambda_cond": 1.0, "cond_via_gumbel": False})
            _, part = compute_losses(model, items, scoring, noise)
            totals += np.array([part.l_graph, part.l_cond]) * len(chunk)
    l_graph, l_cond = totals / len(examples)
    return total_loss(l_graph, l_cond, config.lambda_cond)


def split_examples(
    examples: Sequence[Example], fraction: float, rng: np.random.Generator
) -> Tuple[List[Example], List[Example]]:
    """Shuffle-split into (train, validation); train keeps at least one example."""
    order = rng.permutation(len(examples))
    n_val = min(int(round(len(examples) * fraction)), len(examples) - 1)
    val = [examples[i] for i in order[:n_val]]
    train = [examples[i] for i in order[n_val:]]
    return train, val


def build_noise_model(config: TrainConfig, train: Sequence[Example]) -> NoiseModel:
    m_x, m_e = estimate_marginals(dag for dag, _ in train)
    return NoiseModel.cosine(
        config.T,
        m_x,
        m_e,
        beta=config.beta,
        mode=Mode(config.mode),
        node_diffusion=config.node_diffusion_enabled,
    )


def _check_parameters(model: GraphTransformer, optimizer: AdamW, epoch: int) -> None:
    for name, param in model.named_parameters():
        if not torch.isfinite(param).all():
            logger.error(f"[Trainer] Parameter {name} became non-finite after epoch {epoch}")
            raise NonFiniteActivationError(f"parameter {name}")
    if not optimizer.moments_finite():
        logger.error(f"[Trainer] Optimizer moments became non-finite after epoch {epoch}")
        raise NonFiniteActivationError("optimizer moments")


def _fmt(value: float) -> str:
    return f"{value:.10g}"


def train_loop(
    config: TrainConfig,
    data_path: PathLike,
    out_path: PathLike,
    val_path: Optional[PathLike] = None,
) -> TrainResult:
    """
    Train a denoiser and write its checkpoint plus a metrics CSV.

    Args:
        config: Training configuration
        data_path: JSONL training set (its stats sidecar is used when present)
        out_path: Checkpoint path; metrics go to `<out_path>.metrics.csv`
        val_path: Held-out JSONL; a val_fraction split of the data otherwise

    Returns:
        TrainResult with the written paths and per-epoch metrics
    """
    threads = config.threads or get_config().threads
    torch.set_num_threads(threads)
    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    generator = torch.Generator().manual_seed(config.seed)

    examples = DatasetRepository(data_path).read_all()
    if not examples:
        raise DatasetFormatError(f"{data_path}: dataset is empty")
    if val_path is not None:
        train, val = examples, DatasetRepository(val_path).read_all()
    else:
        train, val = split_examples(examples, config.val_fraction, rng)

    noise = build_noise_model(config, train)
    sidecar = stats_path_for(data_path)
    stats = load_stats(sidecar) if sidecar.exists() else LevelStructureStats.estimate(
        dag for dag, _ in train
    )

    model = GraphTransformer(config.to_model_config())
    optimizer = AdamW(
        model.parameters(), lr=config.learning_rate, weight_decay=config.weight_decay
    )
    checkpoints = CheckpointRepository(out_path)
    metrics_path = metrics_path_for(out_path)
    metrics_path.parent.mkdir(parents=True, exist_ok=True)

    logger.info(
        f"[Trainer] Starting: {len(train)} train / {len(val)} val graphs, T={config.T}, "
        f"beta={config.beta}, lambda={config.lambda_cond}, epochs={config.epochs}, "
        f"threads={threads}"
    )

    def metadata(epoch: int) -> Dict[str, object]:
        return {
            "epoch": epoch,
            "train_config": config.model_dump(by_alias=True),
            "noise": noise.to_dict(),
            "level_stats": stats.to_dict(),
        }

    result = TrainResult(checkpoint_path=Path(out_path), metrics_path=metrics_path)
    step = 0
    with metrics_path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(METRICS_HEADER)
        for epoch in range(1, config.epochs + 1):
            order = rng.permutation(len(train))
            sums = np.zeros(3)
            batches = 0
            for start in range(0, len(order), config.batch_size):
                batch = [train[i] for i in order[start : start + config.batch_size]]
                part = train_step(model, optimizer, batch, config, noise, rng, generator)
                sums += (part.l_graph, part.l_cond, part.total)
                batches += 1
                step += 1
            l_graph, l_cond, total = sums / batches

            _check_parameters(model, optimizer, epoch)
            val_rng = np.random.default_rng(config.seed + VAL_SEED_OFFSET)
            held_out = evaluate_losses(model, val, config, noise, val_rng)

            row = {
                "epoch": epoch,
                "step": step,
                "l_graph": l_graph,
                "l_cond": l_cond,
                "total": total,
                "val_l_graph": held_out.l_graph,
                "val_l_cond": held_out.l_cond,
            }
            result.history.append(row)
            writer.writerow([epoch, step] + [_fmt(row[k]) for k in METRICS_HEADER[2:]])
            handle.flush()
            logger.info(
                f"[Trainer] Epoch {epoch}/{config.epochs}: l_graph={l_graph:.4f} "
                f"l_cond={l_cond:.4f} total={total:.4f} val_l_graph={held_out.l_graph:.4f} "
                f"val_l_cond={held_out.l_cond:.4f}"
            )

            if epoch % config.checkpoint_every == 0 or epoch == config.epochs:
                checkpoints.save(model, metadata(epoch))

    logger.info(f"[Trainer] Finished {config.epochs} epochs ({step} steps) -> {out_path}")
    return result
