import numpy as np
import pytest
import torch
import torch.nn.functional as F

from flowsr.blocks import (
    RdbConfig,
    ResidualDenseBlock,
    count_parameters,
    subpixel_downscale,
    subpixel_upscale,
    zero_,
)
from flowsr.flow_ops import upsample_flow
from flowsr.model import ModelConfig, VideoSR
from flowsr.ofrnet import OFRnet, OfrConfig
from flowsr.srnet import SRnet, SrConfig

from oracles import gradient_check, ofrnet_params, rdb_params, srnet_params

TINY_OFR = {"channels": 8, "num_rdbs": 1, "rdb": {"num_layers": 2, "growth": 4}}
TINY_SR = {"channels": 8, "num_rdbs": 1, "rdb": {"num_layers": 2, "growth": 4}}


def tiny_model(s=2, dtype=torch.float32, seed=0):
    torch.manual_seed(seed)
    return VideoSR(ModelConfig(scale=s, ofr=TINY_OFR, sr=TINY_SR)).to(dtype)


# --- sub-pixel rearrangement ------------------------------------------------------


@pytest.mark.parametrize("r", [2, 3, 4])
def test_subpixel_matches_pixel_shuffle(r):
    x = torch.randn(2, 3 * r * r, 5, 7)
    assert torch.equal(subpixel_upscale(x, r), F.pixel_shuffle(x, r))
    y = torch.randn(2, 3, 5 * r, 7 * r)
    assert torch.equal(subpixel_downscale(y, r), F.pixel_unshuffle(y, r))


@pytest.mark.parametrize("r", [2, 3, 4])
def test_subpixel_bijection(r):
    x = torch.randperm(r * r * 6 * 4).reshape(1, r * r, 6, 4).double()
    up = subpixel_upscale(x, r)
    assert torch.equal(torch.sort(up.flatten()).values, torch.sort(x.flatten()).values)
    assert torch.equal(subpixel_downscale(up, r), x)


def test_subpixel_channel_layout():
    r = 2
    x = torch.zeros(1, 4, 1, 1)
    x[0, :, 0, 0] = torch.tensor([0.0, 1.0, 2.0, 3.0])
    up = subpixel_upscale(x, r)[0, 0]
    assert up.tolist() == [[0.0, 1.0], [2.0, 3.0]]


def test_subpixel_rejects_bad_channels():
    with pytest.raises(ValueError):
        subpixel_upscale(torch.zeros(1, 5, 2, 2), 2)
    with pytest.raises(ValueError):
        subpixel_downscale(torch.zeros(1, 1, 5, 4), 2)


# --- residual dense block ---------------------------------------------------------


def test_rdb_zero_fusion_is_identity():
    rdb = ResidualDenseBlock(6, RdbConfig(num_layers=3, growth=4))
    zero_(rdb.fusion)
    x = torch.randn(2, 6, 9, 9)
    assert torch.equal(rdb(x), x)


def test_rdb_shape_and_params():
    cfg = RdbConfig(num_layers=5, growth=16, fusion_kernel=3)
    rdb = ResidualDenseBlock(12, cfg)
    assert rdb(torch.randn(1, 12, 7, 5)).shape == (1, 12, 7, 5)
    assert count_parameters(rdb) == rdb_params(12, 5, 16, 3, 3)


def test_rdb_rejects_wrong_channels():
    with pytest.raises(ValueError):
        ResidualDenseBlock(6)(torch.zeros(1, 5, 4, 4))


def test_rdb_config_validation():
    with pytest.raises(ValueError):
        RdbConfig(num_layers=1)
    with pytest.raises(ValueError):
        RdbConfig(kernel_size=4)


# --- parameter budgets ------------------------------------------------------------


def test_ofrnet_default_budget():
    n = count_parameters(OFRnet())
    assert n == ofrnet_params() == 622_500
    assert abs(n - 600_000) <= 0.25 * 600_000


@pytest.mark.parametrize("s", [2, 3, 4])
def test_ofrnet_count_matches_closed_form(s):
    assert count_parameters(OFRnet(OfrConfig(scale=s))) == ofrnet_params(s=s)


def test_srnet_count_matches_closed_form():
    assert count_parameters(SRnet()) == srnet_params()
    cfg = SrConfig(scale=2, n_frames=5, channels=16, num_rdbs=2, rdb=RdbConfig(3, 8))
    expected = srnet_params(s=2, n_frames=5, c=16, rdbs=2, layers=3, growth=8)
    assert count_parameters(SRnet(cfg)) == expected


# --- OFRnet -------------------------------------------------------------------------


def test_ofrnet_tier_shapes():
    net = OFRnet(OfrConfig(scale=3, **{**TINY_OFR, "rdb": RdbConfig(2, 4)}))
    i, j = torch.rand(2, 1, 8, 6), torch.rand(2, 1, 8, 6)
    pyr = net(i, j)
    assert pyr.ld.shape == (2, 2, 4, 3)
    assert pyr.lr.shape == (2, 2, 8, 6)
    assert pyr.hr.shape == (2, 2, 24, 18)


def test_ofrnet_zero_heads_give_zero_flow():
    pyr = OFRnet(OfrConfig(scale=2))(torch.rand(1, 1, 8, 8), torch.rand(1, 1, 8, 8))
    for f in pyr:
        assert torch.count_nonzero(f) == 0


def test_level_cascade_with_zero_residuals():
    # With zero-initialised heads each level passes its input flow through
    # (upsampled), so the cascade is visible in isolation.
    net = OFRnet(OfrConfig(scale=2)).double()
    i, j = torch.rand(1, 1, 8, 8, dtype=torch.float64), torch.rand(1, 1, 8, 8, dtype=torch.float64)
    f_ld = torch.randn(1, 2, 4, 4, dtype=torch.float64)
    f_l = net.level2(i, j, f_ld)
    assert torch.equal(f_l, upsample_flow(f_ld, 2))
    assert torch.equal(net.level3(i, j, f_l), upsample_flow(f_l, 2))


def test_ofrnet_rejects_odd_and_mismatched():
    net = OFRnet(OfrConfig(scale=2))
    with pytest.raises(ValueError):
        net(torch.rand(1, 1, 7, 8), torch.rand(1, 1, 7, 8))
    with pytest.raises(ValueError):
        net(torch.rand(1, 1, 8, 8), torch.rand(1, 1, 8, 6))
    with pytest.raises(ValueError):
        net.level2(torch.rand(1, 1, 8, 8), torch.rand(1, 1, 8, 8), torch.zeros(1, 2, 8, 8))


def test_levels_do_not_share_parameters():
    net = OFRnet(OfrConfig(scale=2))
    ids = [{id(p) for p in m.parameters()} for m in (net.level1_net, net.level2_net, net.level3_net)]
    assert not (ids[0] & ids[1]) and not (ids[1] & ids[2])


# --- SRnet / full model -------------------------------------------------------------


def test_srnet_shapes_and_channel_check():
    cfg = SrConfig(scale=3, channels=8, num_rdbs=1, rdb=RdbConfig(2, 4))
    net = SRnet(cfg)
    assert cfg.in_channels == 2 * 9 + 1
    assert net(torch.rand(2, 19, 5, 6)).shape == (2, 1, 15, 18)
    with pytest.raises(ValueError):
        net(torch.rand(2, 18, 5, 6))


def test_global_residual_adds_bicubic_center():
    cfg = SrConfig(scale=2, channels=8, num_rdbs=1, rdb=RdbConfig(2, 4), global_residual=True)
    net = SRnet(cfg)
    zero_(net.head)
    cube = torch.rand(1, 9, 6, 6)
    expected = F.interpolate(cube[:, -1:], scale_factor=2, mode="bicubic", align_corners=False)
    assert torch.allclose(net(cube), expected)


def test_model_forward_shapes():
    model = tiny_model(s=2)
    out = model(torch.rand(3, 3, 8, 10))
    assert out.sr.shape == (3, 1, 16, 20)
    assert out.cube.shape == (3, 9, 8, 10)
    assert len(out.flows) == 2
    assert out.flows[0].hr.shape == (3, 2, 16, 20)


def test_model_rejects_bad_window():
    with pytest.raises(ValueError):
        tiny_model()(torch.rand(1, 5, 8, 8))


def test_batched_pairs_match_separate_passes():
    model = tiny_model(s=2).double()
    for p in model.ofrnet.parameters():
        p.data.add_(0.01 * torch.randn_like(p))
    w = torch.rand(2, 3, 8, 8, dtype=torch.float64)
    out = model(w)
    for k, t in enumerate(model.neighbor_indices()):
        pyr = model.ofrnet(w[:, t : t + 1], w[:, 1:2])
        for a, b in zip(out.flows[k], pyr):
            np.testing.assert_allclose(a.detach().numpy(), b.detach().numpy(), rtol=0, atol=1e-12)


def test_model_config_round_trip():
    cfg = ModelConfig(scale=2, ofr=TINY_OFR, sr=TINY_SR)
    again = ModelConfig.from_dict(cfg.to_dict())
    assert again.to_dict() == cfg.to_dict()
    with pytest.raises(ValueError):
        ModelConfig(n_frames=4)


def test_forward_deterministic():
    a = tiny_model(seed=3)
    b = tiny_model(seed=3)
    w = torch.rand(1, 3, 8, 8)
    assert torch.equal(a(w).sr, b(w).sr)


def test_network_gradients_match_finite_differences():
    torch.manual_seed(0)
    model = tiny_model(s=2, dtype=torch.float64)
    for p in model.parameters():
        p.data.add_(0.05 * torch.randn_like(p))
    w = torch.rand(1, 3, 8, 8, dtype=torch.float64)
    params = [model.ofrnet.level3_net.head.weight, model.srnet.features.weight]
    err = gradient_check(lambda: model(w).sr.square().mean(), params, trials=3, h=1e-6)
    assert err < 1e-4
