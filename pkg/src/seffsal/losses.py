"""Adaptive pixel intensity loss.

Pixels near mask boundaries get weight above 1 via pooled deviations of the
ground truth at several kernel sizes; the weighted BCE, IoU, and L1 terms are
combined with fixed coefficients and summed over all prediction heads.
"""

from dataclasses import dataclass

import torch
import torch.nn.functional as F

from .errors import ContractError

EPS = 1e-7


@dataclass(frozen=True)
class ApiWeights:
    lambda_bce: float = 1.0
    lambda_iou: float = 0.5
    lambda_l1: float = 0.3
    pooling_kernels: tuple = (3, 15, 31)
    omega_mu: float = 0.5

    def __post_init__(self):
        if any(k % 2 == 0 or k < 1 for k in self.pooling_kernels):
            raise ContractError(f"pooling kernels must be odd, got {self.pooling_kernels}")
        if self.omega_mu <= 0:
            raise ContractError("omega_mu must be positive")
        object.__setattr__(self, "pooling_kernels", tuple(self.pooling_kernels))


def adaptive_weight(gt, kernels=(3, 15, 31), mu=0.5):
    """Boundary-emphasizing weight: 1 + mu * sum_k |avgpool_k(gt) - gt|.

    Pooling uses replicate padding, so the weight is exactly 1 wherever the
    mask is constant over the largest kernel footprint, borders included.
    """
    _check_map(gt, "gt")
    if bool((gt < 0).any()) or bool((gt > 1).any()):
        raise ContractError("gt values must lie in [0, 1]")
    dev = torch.zeros_like(gt)
    for k in kernels:
        pad = k // 2
        pooled = F.avg_pool2d(F.pad(gt, (pad, pad, pad, pad), mode="replicate"),
                              k, stride=1)
        dev = dev + (pooled - gt).abs()
    return 1 + mu * dev


def a_bce(pred, gt, omega):
    """Weighted binary cross entropy, normalized by the total weight."""
    _check_triplet(pred, gt, omega)
    p = pred.clamp(EPS, 1 - EPS)
    bce = -(gt * torch.log(p) + (1 - gt) * torch.log(1 - p))
    return (omega * bce).sum() / omega.sum()


def a_iou(pred, gt, omega):
    """Weighted soft IoU loss, 1 - intersection / union."""
    _check_triplet(pred, gt, omega)
    inter = (omega * pred * gt).sum()
    union = (omega * (pred + gt - pred * gt)).sum()
    return 1 - inter / (union + EPS)


def a_l1(pred, gt, omega):
    """Weighted mean absolute error, normalized by the total weight."""
    _check_triplet(pred, gt, omega)
    return (omega * (pred - gt).abs()).sum() / omega.sum()


def combine_api(bce, iou, l1, weights: ApiWeights = ApiWeights()):
    return weights.lambda_bce * bce + weights.lambda_iou * iou + weights.lambda_l1 * l1


def api_loss(pred, gt, weights: ApiWeights = ApiWeights()):
    """Full adaptive pixel intensity loss for one prediction map."""
    omega = adaptive_weight(gt, weights.pooling_kernels, weights.omega_mu)
    return combine_api(a_bce(pred, gt, omega), a_iou(pred, gt, omega),
                       a_l1(pred, gt, omega), weights)


def resize_gt(gt, size):
    """Downscale ground truth to a head's resolution: area-average, re-binarize."""
    size = tuple(size)
    if tuple(gt.shape[-2:]) == size:
        return gt
    soft = F.interpolate(gt, size=size, mode="area")
    return (soft >= 0.5).to(gt.dtype)


def per_head_losses(bundle, gt, weights: ApiWeights = ApiWeights()):
    """API loss per (scale, layer) head against resolution-matched ground truth."""
    if gt.dim() != 4 or gt.shape[1] != 1:
        raise ContractError(f"gt must be [N,1,H,W], got {tuple(gt.shape)}")
    losses = {}
    for key in sorted(bundle.maps):
        pred = bundle.maps[key]
        if pred.shape[0] != gt.shape[0]:
            raise ContractError(
                f"bundle batch {pred.shape[0]} does not match gt batch {gt.shape[0]}")
        losses[key] = api_loss(pred, resize_gt(gt, pred.shape[-2:]), weights)
    return losses


def total_loss(bundle, gt, weights: ApiWeights = ApiWeights()):
    """Sum of the per-head API losses (12 terms for the full variant)."""
    return sum(per_head_losses(bundle, gt, weights).values())


def _check_map(t, name):
    if t.dim() != 4:
        raise ContractError(f"{name} must be [N,C,H,W], got {tuple(t.shape)}")


def _check_triplet(pred, gt, omega):
    if pred.shape != gt.shape or pred.shape != omega.shape:
        raise ContractError(
            f"pred {tuple(pred.shape)}, gt {tuple(gt.shape)}, omega "
            f"{tuple(omega.shape)} must all match")
