import numpy as np
import pytest
import torch

from flowsr.flow_ops import PyramidFlows, downsample_frame
from flowsr.losses import (
    LossWeights,
    TierFrames,
    combine_levels,
    level_terms,
    loss_level,
    loss_ofr,
    loss_sr,
    loss_total,
)

from oracles import gradient_check, loss_level_loop, smoothness_loop, warp_loop


def d(*shape, seed=0):
    return torch.rand(*shape, generator=torch.Generator().manual_seed(seed), dtype=torch.float64)


def random_branch(s=2, h=8, w=8, seed=0):
    g = torch.Generator().manual_seed(seed)
    pyr = PyramidFlows(
        torch.randn(1, 2, h // 2, w // 2, generator=g, dtype=torch.float64),
        torch.randn(1, 2, h, w, generator=g, dtype=torch.float64),
        torch.randn(1, 2, h * s, w * s, generator=g, dtype=torch.float64),
    )
    src = TierFrames.from_lr_hr(d(1, 1, h, w, seed=seed + 1), d(1, 1, h * s, w * s, seed=seed + 2))
    return pyr, src


def test_loss_level_matches_loop_oracle():
    src, target = d(1, 1, 6, 7, seed=1), d(1, 1, 6, 7, seed=2)
    flow = 2 * torch.randn(1, 2, 6, 7, generator=torch.Generator().manual_seed(3), dtype=torch.float64)
    ours = float(loss_level(src, flow, target, 0.01))
    ref = loss_level_loop(src[0, 0].numpy(), flow[0, 0].numpy(), flow[0, 1].numpy(), target[0, 0].numpy(), 0.01)
    assert ours == pytest.approx(ref, rel=1e-12)


def test_loss_level_sum_reduction():
    src, target = d(1, 1, 5, 5, seed=4), d(1, 1, 5, 5, seed=5)
    flow = torch.randn(1, 2, 5, 5, generator=torch.Generator().manual_seed(6), dtype=torch.float64)
    warped = warp_loop(src[0, 0].numpy(), flow[0, 0].numpy(), flow[0, 1].numpy())
    ref = ((warped - target[0, 0].numpy()) ** 2).sum() + 0.5 * smoothness_loop(flow[0, 0].numpy(), flow[0, 1].numpy())
    assert float(loss_level(src, flow, target, 0.5, reduction="sum")) == pytest.approx(ref, rel=1e-12)


def test_loss_level_zero_for_aligned_frames():
    x = d(2, 1, 6, 6)
    assert float(loss_level(x, torch.zeros(2, 2, 6, 6, dtype=torch.float64), x, 0.01)) == 0.0


def test_loss_level_shape_mismatch():
    with pytest.raises(ValueError):
        loss_level(d(1, 1, 4, 4), torch.zeros(1, 2, 4, 5, dtype=torch.float64), d(1, 1, 4, 4), 0.01)


def test_combine_levels_hand_composition():
    w = LossWeights()
    terms = [
        (torch.tensor(0.8), torch.tensor(0.4), torch.tensor(0.1)),
        (torch.tensor(0.2), torch.tensor(0.6), torch.tensor(0.3)),
    ]
    by_hand = ((0.1 + 0.25 * 0.4 + 0.125 * 0.8) + (0.3 + 0.25 * 0.6 + 0.125 * 0.2)) / 2
    assert float(combine_levels(terms, w)) == pytest.approx(by_hand, abs=1e-7)


def test_loss_ofr_equals_hand_evaluated_levels():
    w = LossWeights()
    branches = [random_branch(seed=k) for k in (0, 10)]
    center = TierFrames.from_lr_hr(d(1, 1, 8, 8, seed=20), d(1, 1, 16, 16, seed=21))
    total = float(loss_ofr([b[0] for b in branches], [b[1] for b in branches], center, w))
    by_hand = 0.0
    for pyr, src in branches:
        lv = []
        for tier in ("ld", "lr", "hr"):
            s, f, t = getattr(src, tier), getattr(pyr, tier), getattr(center, tier)
            lv.append(loss_level_loop(s[0, 0].numpy(), f[0, 0].numpy(), f[0, 1].numpy(), t[0, 0].numpy(), 0.01))
        by_hand += lv[2] + 0.25 * lv[1] + 0.125 * lv[0]
    assert total == pytest.approx(by_hand / 2, rel=1e-12)


def test_loss_ofr_linear_in_level_weights():
    pyr, src = random_branch(seed=2)
    center = TierFrames.from_lr_hr(d(1, 1, 8, 8, seed=30), d(1, 1, 16, 16, seed=31))
    l1, l2, l3 = (float(t) for t in level_terms(pyr, src, center, LossWeights()))
    for lam1, lam2 in [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (0.5, 2.0)]:
        wts = LossWeights(lambda1=lam1, lambda2=lam2, temporal_half_window=1)
        val = float(loss_ofr([pyr, pyr], [src, src], center, wts))
        assert val == pytest.approx(l3 + lam2 * l2 + lam1 * l1, rel=1e-12)


def test_loss_ofr_branch_count_checked():
    pyr, src = random_branch()
    center = TierFrames.from_lr_hr(d(1, 1, 8, 8), d(1, 1, 16, 16))
    with pytest.raises(ValueError):
        loss_ofr([pyr], [src], center)
    with pytest.raises(ValueError):
        loss_ofr([pyr, pyr], [src], center)


def test_loss_total_constructed_values():
    total = loss_total(torch.tensor(0.04, dtype=torch.float64), torch.tensor(1.0, dtype=torch.float64))
    assert float(total) == pytest.approx(0.05, abs=1e-15)


def test_loss_total_lambda4_zero_gives_sr_gradient_only():
    x = d(1, 1, 4, 4, seed=1).requires_grad_()
    y = d(1, 1, 4, 4, seed=2)
    l_sr = loss_sr(x, y)
    l_ofr = (x * 3).sum()
    (g_total,) = torch.autograd.grad(loss_total(l_sr, l_ofr, 0.0), x)
    (g_sr,) = torch.autograd.grad(loss_sr(x, y), x)
    assert torch.equal(g_total, g_sr)


def test_loss_sr_mse():
    a, b = torch.zeros(1, 1, 4, 4), torch.full((1, 1, 4, 4), 0.1)
    assert float(loss_sr(a, b)) == pytest.approx(0.01, rel=1e-6)
    assert float(loss_sr(a, b, "sum")) == pytest.approx(0.16, rel=1e-6)
    with pytest.raises(ValueError):
        loss_sr(a, torch.zeros(1, 1, 4, 5))


def test_tier_frames_downsampling():
    lr = d(1, 1, 8, 8)
    tf = TierFrames.from_lr_hr(lr, d(1, 1, 16, 16))
    assert torch.equal(tf.ld, downsample_frame(lr))
    np.testing.assert_allclose(tf.ld[0, 0, 0, 0].item(), lr[0, 0, :2, :2].mean().item(), rtol=1e-15)


def test_weights_validation():
    with pytest.raises(ValueError):
        LossWeights(lambda1=-1.0)
    with pytest.raises(ValueError):
        LossWeights(reduction="max")
    assert LossWeights(temporal_half_window=2).n_frames == 5


def test_loss_level_gradient():
    src, target = d(1, 1, 6, 6, seed=7), d(1, 1, 6, 6, seed=8)
    # Flow kept away from integer positions, where bilinear sampling has kinks.
    flow = (0.3 + 0.4 * d(1, 2, 6, 6, seed=9)).requires_grad_()
    src.requires_grad_()
    err = gradient_check(lambda: loss_level(src, flow, target, 0.01), [flow, src])
    assert err < 1e-4
