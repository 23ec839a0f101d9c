"""
AdamW with decoupled weight decay.

`adamw_update` is the per-tensor rule; `AdamW` drives it over parameter
groups like any torch optimizer.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Tuple

import torch

logger = logging.getLogger(__name__)

DEFAULT_BETAS = (0.9, 0.999)
DEFAULT_EPS = 1e-8


@dataclass
class MomentState:
    """First/second moment accumulators for one parameter tensor."""

    exp_avg: torch.Tensor
    exp_avg_sq: torch.Tensor
    step: int = 0

    @classmethod
    def zeros_like(cls, param: torch.Tensor) -> "MomentState":
        return cls(
            exp_avg=torch.zeros_like(param, memory_format=torch.preserve_format),
            exp_avg_sq=torch.zeros_like(param, memory_format=torch.preserve_format),
        )


@torch.no_grad()
def adamw_update(
    param: torch.Tensor,
    grad: torch.Tensor,
    moments: MomentState,
    lr: float,
    betas: Tuple[float, float] = DEFAULT_BETAS,
    eps: float = DEFAULT_EPS,
    weight_decay: float = 0.0,
) -> torch.Tensor:
    """
    One in-place AdamW step on `param`; advances `moments`.

    p ← p·(1 − lr·wd)
    m ← β1·m + (1 − β1)·g,  v ← β2·v + (1 − β2)·g²
    p ← p − lr · (m / (1 − β1^k)) / (√(v / (1 − β2^k)) + eps)

    Returns:
        The updated parameter (same tensor object)
    """
    beta1, beta2 = betas
    moments.step += 1
    k = moments.step

    if weight_decay:
        param.mul_(1 - lr * weight_decay)

    moments.exp_avg.mul_(beta1).add_(grad, alpha=1 - beta1)
    moments.exp_avg_sq.mul_(beta2).addcmul_(grad, grad, value=1 - beta2)

    bias1 = 1 - beta1**k
    bias2 = 1 - beta2**k
    denom = (moments.exp_avg_sq / bias2).sqrt().add_(eps)
    param.addcdiv_(moments.exp_avg, denom, value=-lr / bias1)
    return param


class AdamW(torch.optim.Optimizer):
    """Decoupled-weight-decay Adam over parameter groups."""

    def __init__(
        self,
        params: Iterable[torch.Tensor],
        lr: float = 2e-4,
        betas: Tuple[float, float] = DEFAULT_BETAS,
        eps: float = DEFAULT_EPS,
        weight_decay: float = 1e-12,
    ):
        if lr < 0:
            raise ValueError(f"Invalid learning rate: {lr}")
        if not 0.0 <= betas[0] < 1.0 or not 0.0 <= betas[1] < 1.0:
            raise ValueError(f"Invalid betas: {betas}")
        if eps < 0:
            raise ValueError(f"Invalid eps: {eps}")
        if weight_decay < 0:
            raise ValueError(f"Invalid weight_decay: {weight_decay}")
        defaults = {"lr": lr, "betas": betas, "eps": eps, "weight_decay": weight_decay}
        super().__init__(params, defaults)

    @torch.no_grad()
    def step(self, closure: Optional[Callable[[], float]] = None) -> Optional[float]:
        loss = None
        if closure is not None:
            with torch.enable_grad():
                loss = closure()

        for group in self.param_groups:
            for p in group["params"]:
                if p.grad is None:
                    continue
                state = self.state[p]
                if "moments" not in state:
                    state["moments"] = MomentState.zeros_like(p)
                adamw_update(
                    p,
                    p.grad,
                    state["moments"],
                    lr=group["lr"],
                    betas=group["betas"],
                    eps=group["eps"],
                    weight_decay=group["weight_decay"],
                )
        return loss

    def moments_finite(self) -> bool:
        """True when every accumulated moment is finite."""
        for state in self.state.values():
            moments: MomentState = state.get("moments")
            if moments is None:
                continue
            if not (
                torch.isfinite(moments.exp_avg).all() and torch.isfinite(moments.exp_avg_sq).all()
            ):
                return False
        return True


def clip_grad_norm(params: Iterable[torch.Tensor], max_norm: Optional[float]) -> float:
    """Scale gradients to a global L2 norm of at most max_norm; returns the pre-clip norm."""
    params = [p for p in params if p.grad is not None]
    if not params:
        return 0.0
    limit = float("inf") if max_norm is None else max_norm
    total = float(torch.nn.utils.clip_grad_norm_(params, limit))
    if total > limit:
        logger.debug(f"[Optimizer] Clipped gradient norm {total:.4f} -> {max_norm}")
    return total
