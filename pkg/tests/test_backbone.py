import pytest
import torch
from hypothesis import given, strategies as st

from seffsal.backbone import (Backbone, BackboneConfig, FeaturePyramid,
                              build_backbone, extract_features)
from seffsal.errors import ConfigError, ContractError

from oracles import backbone_layer_sizes

TINY = BackboneConfig(stage_channels=(4, 8, 8, 8))


@pytest.mark.parametrize("size,expected", [
    (352, [88, 44, 22, 11]),
    (176, [44, 22, 11, 6]),
    (88, [22, 11, 6, 3]),
])
def test_layer_sizes_match_stride_oracle(size, expected):
    assert backbone_layer_sizes(size) == expected  # oracle self-check
    bb = build_backbone(TINY, seed=0)
    pyr = extract_features(bb, torch.rand(1, 3, size, size))
    assert [f.shape[-1] for f in pyr.layers] == expected
    assert [f.shape[-2] for f in pyr.layers] == expected


@given(h=st.integers(32, 96), w=st.integers(32, 96))
def test_layer_sizes_oracle_rect(h, w):
    bb = build_backbone(TINY, seed=0)
    pyr = extract_features(bb, torch.rand(1, 3, h, w))
    assert [f.shape[-2] for f in pyr.layers] == backbone_layer_sizes(h)
    assert [f.shape[-1] for f in pyr.layers] == backbone_layer_sizes(w)


def test_channel_contract():
    cfg = BackboneConfig(stage_channels=(4, 8, 16, 32), blocks_per_stage=2)
    bb = build_backbone(cfg, seed=0)
    pyr = extract_features(bb, torch.rand(2, 3, 64, 48))
    assert [f.shape[1] for f in pyr.layers] == [4, 8, 16, 32]
    assert all(f.shape[0] == 2 for f in pyr.layers)


def test_same_seed_identical_parameters():
    a = build_backbone(TINY, seed=7)
    b = build_backbone(TINY, seed=7)
    for pa, pb in zip(a.parameters(), b.parameters()):
        assert torch.equal(pa, pb)


def test_different_seed_differs():
    a = build_backbone(TINY, seed=7)
    b = build_backbone(TINY, seed=8)
    assert any(not torch.equal(pa, pb)
               for pa, pb in zip(a.parameters(), b.parameters()))


def test_six_backbones_have_independent_storage():
    backbones = [build_backbone(TINY, seed=i) for i in range(6)]
    x = torch.rand(1, 3, 64, 64)
    before = [bb(x) for bb in backbones]
    with torch.no_grad():
        for p in backbones[0].parameters():
            p.add_(1.0)
    after = [bb(x) for bb in backbones]
    assert not torch.equal(after[0][0], before[0][0])
    for i in range(1, 6):
        for fa, fb in zip(after[i], before[i]):
            assert torch.equal(fa, fb)


def test_gradient_flow_reaches_every_parameter():
    bb = build_backbone(TINY, seed=3)
    pyr = bb(torch.rand(1, 3, 64, 64))
    loss = sum(f.sum() for f in pyr)
    loss.backward()
    for name, p in bb.named_parameters():
        assert p.grad is not None and p.grad.abs().sum() > 0, name


def test_depth_input_replicated_to_three_channels():
    bb = build_backbone(TINY, seed=0)
    depth = torch.rand(1, 1, 64, 64)
    out_depth = bb(depth)
    out_rgb = bb(depth.expand(-1, 3, -1, -1))
    for a, b in zip(out_depth, out_rgb):
        assert torch.equal(a, b)


def test_input_too_small_rejected():
    bb = build_backbone(TINY, seed=0)
    with pytest.raises(ContractError):
        bb(torch.rand(1, 3, 8, 8))
    with pytest.raises(ContractError):
        bb(torch.rand(1, 3, 64, 8))


def test_invalid_configs_rejected():
    with pytest.raises(ConfigError):
        BackboneConfig(stage_channels=(8, 4, 16, 32))  # not non-decreasing
    with pytest.raises(ConfigError):
        BackboneConfig(stage_channels=(0, 4, 8, 8))
    with pytest.raises(ConfigError):
        BackboneConfig(stage_channels=(4, 8, 8, 8), blocks_per_stage=0)


def test_pyramid_requires_four_layers():
    with pytest.raises(ContractError):
        FeaturePyramid(layers=(torch.zeros(1, 1, 4, 4),) * 3)
