"""
Unit tests for services/optimizer.py
"""

import pytest
import torch

from aigdiff.services.optimizer import AdamW, MomentState, adamw_update, clip_grad_norm


def _param(values):
    return torch.nn.Parameter(torch.tensor(values, dtype=torch.float64))


# ===== UPDATE RULE TESTS =====


def test_first_step_by_hand():
    """Bias correction makes the first step lr·g/|g|"""
    p = torch.tensor([1.0], dtype=torch.float64)
    moments = MomentState.zeros_like(p)
    adamw_update(p, torch.tensor([0.5], dtype=torch.float64), moments, lr=0.1)
    assert float(p) == pytest.approx(0.9, abs=1e-7)
    assert moments.step == 1
    assert float(moments.exp_avg) == pytest.approx(0.05)
    assert float(moments.exp_avg_sq) == pytest.approx(0.00025)


def test_weight_decay_only():
    """A zero gradient leaves only the decoupled decay"""
    p = torch.tensor([2.0], dtype=torch.float64)
    grad = torch.zeros(1, dtype=torch.float64)
    adamw_update(p, grad, MomentState.zeros_like(p), 0.1, weight_decay=0.5)
    assert float(p) == pytest.approx(1.9)


def test_zero_gradient_without_decay_is_noop():
    """No gradient and no decay, no change"""
    p = torch.tensor([2.0, -3.0], dtype=torch.float64)
    adamw_update(p, torch.zeros(2, dtype=torch.float64), MomentState.zeros_like(p), 0.1)
    assert p.tolist() == [2.0, -3.0]


def test_constant_gradient_moves_lr_per_step():
    """Constant gradients move each coordinate by about lr per step"""
    p = torch.tensor([0.0, 0.0], dtype=torch.float64)
    moments = MomentState.zeros_like(p)
    grad = torch.tensor([3.0, -0.01], dtype=torch.float64)
    for _ in range(10):
        adamw_update(p, grad, moments, lr=0.01)
    assert p.tolist() == pytest.approx([-0.1, 0.1], abs=1e-6)


def test_matches_torch_adamw():
    """The optimizer tracks torch.optim.AdamW step for step"""
    torch.manual_seed(0)
    start = torch.randn(5, dtype=torch.float64)
    ours, ref = _param(start.tolist()), _param(start.tolist())
    opt_ours = AdamW([ours], lr=0.05, weight_decay=0.01)
    opt_ref = torch.optim.AdamW([ref], lr=0.05, weight_decay=0.01, eps=1e-8)
    for step in range(20):
        target = torch.linspace(-1, 1, 5, dtype=torch.float64) * (step + 1)
        for param, opt in ((ours, opt_ours), (ref, opt_ref)):
            opt.zero_grad()
            ((param - target) ** 2).sum().backward()
            opt.step()
    assert torch.allclose(ours, ref, atol=1e-10)


# ===== OPTIMIZER CLASS TESTS =====


def test_invalid_hyperparameters():
    """Negative rates and out-of-range betas are refused"""
    with pytest.raises(ValueError):
        AdamW([_param([1.0])], lr=-1.0)
    with pytest.raises(ValueError):
        AdamW([_param([1.0])], betas=(1.0, 0.999))
    with pytest.raises(ValueError):
        AdamW([_param([1.0])], weight_decay=-0.1)


def test_step_skips_parameters_without_grad():
    """Parameters that got no gradient are untouched"""
    used, unused = _param([1.0]), _param([5.0])
    optimizer = AdamW([used, unused], lr=0.1, weight_decay=0.0)
    (used * 2).sum().backward()
    optimizer.step()
    assert float(unused) == 5.0
    assert float(used) == pytest.approx(0.9, abs=1e-7)


def test_step_with_closure():
    """The closure's loss is returned"""
    p = _param([1.0])
    optimizer = AdamW([p], lr=0.1)

    def closure():
        optimizer.zero_grad()
        loss = (p**2).sum()
        loss.backward()
        return loss

    assert float(optimizer.step(closure)) == pytest.approx(1.0)


def test_moments_finite():
    """Non-finite accumulators are detected"""
    p = _param([1.0])
    optimizer = AdamW([p], lr=0.1)
    p.sum().backward()
    optimizer.step()
    assert optimizer.moments_finite()
    optimizer.state[p]["moments"].exp_avg_sq.fill_(float("nan"))
    assert not optimizer.moments_finite()


# ===== CLIPPING TESTS =====


def test_clip_grad_norm_scales_down():
    """Gradients above the limit are rescaled to it"""
    p = _param([0.0, 0.0])
    p.grad = torch.tensor([3.0, 4.0], dtype=torch.float64)
    assert clip_grad_norm([p], 1.0) == pytest.approx(5.0)
    assert float(p.grad.norm()) == pytest.approx(1.0, abs=1e-6)


def test_clip_grad_norm_disabled_or_small():
    """No limit, or a norm below it, leaves gradients alone"""
    p = _param([0.0, 0.0])
    p.grad = torch.tensor([3.0, 4.0], dtype=torch.float64)
    clip_grad_norm([p], None)
    clip_grad_norm([p], 10.0)
    assert p.grad.tolist() == [3.0, 4.0]
    assert clip_grad_norm([_param([1.0])], 1.0) == 0.0


def test_clip_grad_norm_is_global():
    """The limit applies to the norm over all parameters together"""
    a, b = _param([0.0]), _param([0.0])
    a.grad = torch.tensor([3.0], dtype=torch.float64)
    b.grad = torch.tensor([4.0], dtype=torch.float64)
    assert clip_grad_norm([a, b], 2.5) == pytest.approx(5.0)
    assert a.grad.item() == pytest.approx(1.5, abs=1e-5)
    assert b.grad.item() == pytest.approx(2.0, abs=1e-5)
