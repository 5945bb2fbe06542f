import math

import pytest
import torch
from hypothesis import given, strategies as st

from seffsal.errors import ContractError
from seffsal.losses import (ApiWeights, a_bce, a_iou, a_l1, adaptive_weight,
                            api_loss, combine_api, per_head_losses, resize_gt,
                            total_loss)
from seffsal.net import SaliencyBundle

from fdcheck import check_gradients
from oracles import pooled_deviation_weight


def ones_like(t):
    return torch.ones_like(t)


class TestAdaptiveWeight:
    def test_constant_masks_give_weight_one(self):
        for value in (0.0, 1.0):
            gt = torch.full((1, 1, 16, 16), value)
            w = adaptive_weight(gt)
            assert torch.equal(w, torch.ones_like(w))

    def test_half_plane_matches_bruteforce_oracle(self):
        gt = torch.zeros(1, 1, 8, 8)
        gt[..., :4] = 1.0  # left half foreground
        w = adaptive_weight(gt, kernels=(3, 5), mu=0.5)
        oracle = pooled_deviation_weight(gt[0, 0].numpy(), kernels=(3, 5), mu=0.5)
        assert torch.allclose(w[0, 0], torch.from_numpy(oracle).float(),
                              atol=1e-6, rtol=0)
        # boundary columns strictly above the (constant) far-edge weight
        assert (w[0, 0, :, 3] > w[0, 0, :, 0]).all()
        assert (w[0, 0, :, 4] > w[0, 0, :, 7]).all()

    @given(seed=st.integers(0, 1000))
    def test_weight_lower_bound(self, seed):
        gen = torch.Generator().manual_seed(seed)
        gt = (torch.rand(1, 1, 12, 12, generator=gen) > 0.5).float()
        w = adaptive_weight(gt)
        assert (w >= 1).all()

    def test_out_of_range_gt_rejected(self):
        with pytest.raises(ContractError):
            adaptive_weight(torch.full((1, 1, 4, 4), 1.5))
        with pytest.raises(ContractError):
            adaptive_weight(torch.full((1, 1, 4, 4), -0.1))


class TestWeightedTerms:
    def test_closed_forms_for_half_prediction(self):
        pred = torch.full((1, 1, 8, 8), 0.5)
        gt = torch.ones(1, 1, 8, 8)
        w = ones_like(gt)
        assert abs(a_bce(pred, gt, w).item() - math.log(2)) < 1e-6
        assert abs(a_l1(pred, gt, w).item() - 0.5) < 1e-6
        assert abs(a_iou(pred, gt, w).item() - 0.5) < 1e-6

    def test_perfect_binary_prediction(self):
        gt = torch.zeros(1, 1, 8, 8)
        gt[..., 2:6, 2:6] = 1.0
        w = adaptive_weight(gt)
        assert a_bce(gt, gt, w).item() <= 1e-6
        assert abs(a_iou(gt, gt, w).item()) < 1e-6
        assert a_l1(gt, gt, w).item() == 0.0

    def test_weight_scaling_invariance_for_ratio_losses(self):
        gen = torch.Generator().manual_seed(0)
        pred = torch.rand(1, 1, 8, 8, generator=gen)
        gt = (torch.rand(1, 1, 8, 8, generator=gen) > 0.5).float()
        w = adaptive_weight(gt)
        for factor in (0.25, 7.0):
            assert torch.allclose(a_bce(pred, gt, w), a_bce(pred, gt, factor * w),
                                  rtol=1e-6)
            assert torch.allclose(a_l1(pred, gt, w), a_l1(pred, gt, factor * w),
                                  rtol=1e-6)

    def test_saturated_predictions_clamped_not_error(self):
        gt = torch.ones(1, 1, 4, 4)
        w = ones_like(gt)
        value = a_bce(torch.zeros(1, 1, 4, 4), gt, w)
        assert torch.isfinite(value)

    @given(seed=st.integers(0, 1000))
    def test_non_negativity(self, seed):
        gen = torch.Generator().manual_seed(seed)
        pred = torch.rand(1, 1, 6, 6, generator=gen)
        gt = (torch.rand(1, 1, 6, 6, generator=gen) > 0.5).float()
        w = adaptive_weight(gt)
        assert a_bce(pred, gt, w).item() >= 0
        assert a_iou(pred, gt, w).item() >= 0
        assert a_l1(pred, gt, w).item() >= 0


class TestApiLoss:
    def test_unit_sublosses_combine_to_1_8(self):
        assert combine_api(1.0, 1.0, 1.0) == 1.8

    def test_half_prediction_value(self):
        pred = torch.full((1, 1, 8, 8), 0.5)
        gt = torch.ones(1, 1, 8, 8)
        expected = math.log(2) + 0.5 * 0.5 + 0.3 * 0.5
        assert abs(api_loss(pred, gt).item() - expected) < 1e-6

    def test_perfect_prediction_tiny(self):
        gt = torch.zeros(1, 1, 8, 8)
        gt[..., 1:5, 3:7] = 1.0
        assert api_loss(gt, gt).item() <= 1e-5


def small_bundle(seed=0, dtype=torch.float32, size=8):
    gen = torch.Generator().manual_seed(seed)
    maps = {}
    for i in (1, 2, 3):
        for j in range(1, 5):
            h = max(size // j, 2)
            maps[(i, j)] = torch.rand(1, 1, h, h, generator=gen, dtype=dtype) \
                .clamp(0.02, 0.98)
    return SaliencyBundle(maps=maps, scales=(1, 2, 3))


class TestTotalLoss:
    def test_full_bundle_has_12_summands(self):
        bundle = small_bundle()
        gt = (torch.rand(1, 1, 16, 16, generator=torch.Generator().manual_seed(3))
              > 0.5).float()
        parts = per_head_losses(bundle, gt)
        assert len(parts) == 12
        assert torch.allclose(total_loss(bundle, gt), sum(parts.values()))

    def test_perfect_heads_below_bound(self):
        gt = torch.zeros(1, 1, 16, 16)
        gt[..., 4:12, 4:12] = 1.0
        maps = {}
        for i in (1, 2, 3):
            for j in range(1, 5):
                h = 16 // j
                maps[(i, j)] = resize_gt(gt, (h, h))
        bundle = SaliencyBundle(maps=maps, scales=(1, 2, 3))
        assert total_loss(bundle, gt).item() <= 1.2e-4

    def test_matches_independent_per_map_recomputation(self):
        bundle = small_bundle(seed=5, dtype=torch.float64)
        gt = (torch.rand(1, 1, 16, 16, generator=torch.Generator().manual_seed(8))
              > 0.5).double()
        total = total_loss(bundle, gt).item()
        recomputed = sum(
            api_loss(m, resize_gt(gt, m.shape[-2:])).item()
            for m in bundle.maps.values())
        assert abs(total - recomputed) < 1e-9

    def test_batch_mismatch_rejected(self):
        bundle = small_bundle()
        with pytest.raises(ContractError):
            total_loss(bundle, torch.zeros(2, 1, 16, 16))

    def test_gradients_match_finite_differences(self):
        bundle = small_bundle(seed=7, dtype=torch.float64, size=8)
        for m in bundle.maps.values():
            m.requires_grad_(True)
        gt = (torch.rand(1, 1, 8, 8, generator=torch.Generator().manual_seed(9))
              > 0.5).double()
        tensors = list(bundle.maps.values())
        err = check_gradients(lambda: total_loss(bundle, gt), tensors)
        assert err < 1e-4, f"gradient relative error {err:.2e}"


class TestResizeGt:
    def test_area_average_then_threshold(self):
        gt = torch.zeros(1, 1, 4, 4)
        gt[..., :2, :] = 1.0  # top half
        out = resize_gt(gt, (2, 2))
        assert torch.equal(out, torch.tensor([[[[1.0, 1.0], [0.0, 0.0]]]]))

    def test_identity_at_same_size(self):
        gt = (torch.rand(1, 1, 8, 8) > 0.5).float()
        assert resize_gt(gt, (8, 8)) is gt


def test_api_weights_validation():
    with pytest.raises(ContractError):
        ApiWeights(pooling_kernels=(3, 4))
    with pytest.raises(ContractError):
        ApiWeights(omega_mu=0.0)
