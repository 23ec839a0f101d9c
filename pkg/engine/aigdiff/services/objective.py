"""
Training objectives.

- graph_ce_loss: categorical cross-entropy of predicted types against the clean graph
- soft_simulate: differentiable circuit evaluation from edge-type probabilities
- condition_loss: BCE between soft outputs and the target truth table
- gumbel_sample: Gumbel-Softmax relaxation with optional straight-through
- total_loss: l_graph + λ · l_cond
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Union

import numpy as np
import torch

from aigdiff.exceptions import NonFiniteLossError, ShapeMismatchError
from aigdiff.models.aig import NodeRoster, TruthTable, input_patterns
from aigdiff.models.dag import EDGE_NEGATED, EDGE_NORMAL, NODE_INPUT, NODE_OUTPUT

logger = logging.getLogger(__name__)

PROB_FLOOR = 1e-12
BCE_CLAMP = 1e-7
SELECTION_EPS = 1e-12


@dataclass(frozen=True)
class LossBreakdown:
    l_graph: float
    l_cond: float
    lambda_: float
    total: float


def graph_ce_loss(
    p_x: torch.Tensor,
    p_e: torch.Tensor,
    clean_nodes: Union[np.ndarray, torch.Tensor],
    clean_edges: Union[np.ndarray, torch.Tensor],
    node_loss_enabled: bool = False,
    diagnostics: Optional[Dict[str, int]] = None,
) -> torch.Tensor:
    """
    Summed cross-entropy over all n² directed pairs (and nodes when enabled).

    Args:
        p_x: (n, k_x) predicted node distributions
        p_e: (n, n, k_e) predicted edge distributions
        clean_nodes: (n,) clean node categories
        clean_edges: (n, n) clean edge categories
        node_loss_enabled: Include the node term
        diagnostics: Receives the number of clamped true-class probabilities

    Returns:
        Scalar tensor
    """
    edges = torch.as_tensor(np.asarray(clean_edges), dtype=torch.long)
    if p_e.shape[:2] != edges.shape:
        raise ShapeMismatchError(f"pE shape {tuple(p_e.shape)} vs clean edges {tuple(edges.shape)}")
    true_e = p_e.gather(-1, edges.unsqueeze(-1)).squeeze(-1)
    clamped = int((true_e.detach() < PROB_FLOOR).sum())
    loss = -torch.log(true_e.clamp(min=PROB_FLOOR)).sum()

    if node_loss_enabled:
        nodes = torch.as_tensor(np.asarray(clean_nodes), dtype=torch.long)
        if p_x.shape[0] != nodes.shape[0]:
            raise ShapeMismatchError(
                f"pX shape {tuple(p_x.shape)} vs clean nodes {tuple(nodes.shape)}"
            )
        true_x = p_x.gather(-1, nodes.unsqueeze(-1)).squeeze(-1)
        clamped += int((true_x.detach() < PROB_FLOOR).sum())
        loss = loss - torch.log(true_x.clamp(min=PROB_FLOOR)).sum()

    if clamped:
        logger.warning(f"[Objective] Clamped {clamped} zero true-class probabilities")
    if diagnostics is not None:
        diagnostics["clamped"] = diagnostics.get("clamped", 0) + clamped
    return loss


def soft_simulate(
    p_e: torch.Tensor,
    roster: NodeRoster,
    levels: Sequence[int],
    node_types: Optional[Sequence[int]] = None,
) -> torch.Tensor:
    """
    Evaluate the circuit implied by edge probabilities on every input row.

    Gates are visited in level order. Gate g mixes the signals of all
    lower-level non-output candidates c with weights
    softmax_c(log(pE[c,g,normal] + pE[c,g,negated] + ε)); each signal s is
    first flipped towards 1 - s by the polarity score
    σ = tanh(pE[c,g,normal] - pE[c,g,negated]). AND gates square the mix,
    outputs take it as is, and gates without candidates output 0.

    Args:
        p_e: (n, n, k_e) edge distributions
        roster: Input ids (in input order) and output ids (in output order)
        levels: Per-node level labels
        node_types: Per-node categories; defaults to the roster's layout

    Returns:
        (n_out, 2^n_in) tensor of soft output signals
    """
    n = p_e.shape[0]
    levels = np.asarray(levels, dtype=np.int64)
    types = roster.node_types() if node_types is None else np.asarray(node_types, dtype=np.int64)
    if levels.shape != (n,) or types.shape != (n,):
        raise ShapeMismatchError(f"levels/types must have length {n}")

    rows = 1 << roster.n_in
    patterns = torch.as_tensor(input_patterns(roster.n_in), dtype=p_e.dtype)
    zero = torch.zeros(rows, dtype=p_e.dtype)
    signals: Dict[int, torch.Tensor] = {}
    for index, node in enumerate(roster.input_ids):
        signals[node] = patterns[index]

    for node in sorted(range(n), key=lambda i: (int(levels[i]), i)):
        if node in signals:
            continue
        if types[node] == NODE_INPUT:
            # Input-typed nodes beyond the roster are constants
            signals[node] = zero
            continue
        candidates = [
            c for c in range(n) if levels[c] < levels[node] and types[c] != NODE_OUTPUT
        ]
        if not candidates:
            signals[node] = zero
            continue
        idx = torch.as_tensor(candidates, dtype=torch.long)
        normal = p_e[idx, node, EDGE_NORMAL]
        negated = p_e[idx, node, EDGE_NEGATED]
        weights = torch.softmax(torch.log(normal + negated + SELECTION_EPS), dim=0)
        polarity = torch.tanh(normal - negated)
        child = torch.stack([signals[c] for c in candidates])  # (C, rows)
        keep = ((1 + polarity) / 2)[:, None]
        effective = keep * child + (1 - keep) * (1 - child)
        mix = (weights[:, None] * effective).sum(dim=0)
        signals[node] = mix if types[node] == NODE_OUTPUT else mix * mix

    if not roster.output_ids:
        return torch.zeros((0, rows), dtype=p_e.dtype)
    return torch.stack([signals[o] for o in roster.output_ids])


def condition_loss(cond: Union[TruthTable, torch.Tensor], soft: torch.Tensor) -> torch.Tensor:
    """Mean BCE between target output bits and soft output signals (clamped to [1e-7, 1-1e-7])."""
    target = cond.columns if isinstance(cond, TruthTable) else cond
    target = torch.as_tensor(np.asarray(target), dtype=soft.dtype)
    if target.shape != soft.shape:
        raise ShapeMismatchError(
            f"target {tuple(target.shape)} vs soft outputs {tuple(soft.shape)}"
        )
    if soft.numel() == 0:
        return soft.sum()
    p = soft.clamp(BCE_CLAMP, 1 - BCE_CLAMP)
    return -(target * torch.log(p) + (1 - target) * torch.log(1 - p)).mean()


def gumbel_noise(
    shape: Sequence[int],
    generator: Optional[torch.Generator] = None,
    dtype: torch.dtype = torch.float32,
) -> torch.Tensor:
    u = torch.rand(tuple(shape), generator=generator, dtype=dtype)
    tiny = torch.finfo(dtype).tiny
    return -torch.log(-torch.log(u.clamp(min=tiny)).clamp(min=tiny))


def gumbel_sample(
    dist: torch.Tensor,
    temperature: float,
    generator: Optional[torch.Generator] = None,
    straight_through: bool = False,
    noise: Optional[torch.Tensor] = None,
) -> torch.Tensor:
    """
    softmax((log dist + g) / temperature) with g ~ Gumbel(0, 1).

    Straight-through returns the argmax one-hot on the forward pass while
    gradients follow the relaxed sample. `noise` overrides the Gumbel draw.
    """
    if temperature <= 0:
        raise ValueError(f"temperature must be > 0, got {temperature}")
    if noise is None:
        noise = gumbel_noise(dist.shape, generator, dist.dtype)
    logits = (torch.log(dist.clamp(min=PROB_FLOOR)) + noise) / temperature
    soft = torch.softmax(logits, dim=-1)
    if not straight_through:
        return soft
    hard = torch.nn.functional.one_hot(soft.argmax(dim=-1), soft.shape[-1]).to(soft.dtype)
    return hard - soft.detach() + soft


def total_loss(l_graph: float, l_cond: float, lambda_: float = 1.0) -> LossBreakdown:
    """
    Raises:
        NonFiniteLossError: If any input is not finite
    """
    values = (float(l_graph), float(l_cond), float(lambda_))
    if not all(math.isfinite(v) for v in values):
        raise NonFiniteLossError(
            f"non-finite loss terms l_graph={l_graph}, l_cond={l_cond}, lambda={lambda_}"
        )
    g, c, lam = values
    return LossBreakdown(l_graph=g, l_cond=c, lambda_=lam, total=g + lam * c)
