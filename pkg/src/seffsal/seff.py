"""Saliency-enhanced feature fusion: gated merging of two feature maps.

Both inputs are refined together with an auxiliary saliency tensor, then
combined convexly with a gate built from local (per-position) and global
(pooled) channel context.
"""

import torch
from torch import nn

from .errors import ConfigError, ContractError, NumericError
from .layers import ChannelNorm, ConvBlock, parameter_count, seeded_init_


class SeffBlock(nn.Module):
    """Fuse two C-channel features under a 4-channel saliency guidance map.

    forward(f1, f2, s) computes

        F1' = Refine1(cat(f1, s)),  F2' = Refine2(cat(f2, s))
        W   = sigmoid(LCC(F1' + F2') + GCC(F1' + F2'))
        out = W * F1' + (1 - W) * F2'

    so the output lies elementwise between the two refined features.
    """

    def __init__(self, channels, guidance_channels=4, reduction=4):
        super().__init__()
        if channels <= 0:
            raise ConfigError(f"channels must be positive, got {channels}")
        if channels % reduction != 0:
            raise ConfigError(
                f"reduction {reduction} must divide channels {channels}")
        self.channels = channels
        self.guidance_channels = guidance_channels
        self.reduction = reduction
        mid = channels // reduction

        self.refine1 = nn.Sequential(
            ConvBlock(channels + guidance_channels, channels),
            ConvBlock(channels, channels),
        )
        self.refine2 = nn.Sequential(
            ConvBlock(channels + guidance_channels, channels),
            ConvBlock(channels, channels),
        )
        # 1x1 bottlenecks; normalization only after the first conv so the
        # global branch stays valid on 1x1 maps.
        self.lcc = nn.Sequential(
            nn.Conv2d(channels, mid, 1),
            ChannelNorm(mid),
            nn.ReLU(inplace=True),
            nn.Conv2d(mid, channels, 1),
        )
        self.gcc = nn.Sequential(
            nn.Conv2d(channels, mid, 1),
            ChannelNorm(mid),
            nn.ReLU(inplace=True),
            nn.Conv2d(mid, channels, 1),
        )

    def local_context(self, u):
        """Per-position channel attention logits; no spatial mixing."""
        self._check_channels(u)
        return self.lcc(u)

    def global_context(self, u):
        """Pooled channel attention logits, shape [N, C, 1, 1]."""
        self._check_channels(u)
        pooled = u.mean(dim=(2, 3), keepdim=True)
        return self.gcc(pooled)

    def gate(self, u):
        return torch.sigmoid(self.local_context(u) + self.global_context(u))

    def forward(self, f1, f2, s):
        self._check_inputs(f1, f2, s)
        f1p = self.refine1(torch.cat([f1, s], dim=1))
        f2p = self.refine2(torch.cat([f2, s], dim=1))
        w = self.gate(f1p + f2p)
        return w * f1p + (1 - w) * f2p

    def _check_channels(self, u):
        if u.dim() != 4 or u.shape[1] != self.channels:
            raise ContractError(
                f"expected [N,{self.channels},H,W], got {tuple(u.shape)}")

    def _check_inputs(self, f1, f2, s):
        if f1.shape != f2.shape:
            raise ContractError(
                f"f1 {tuple(f1.shape)} and f2 {tuple(f2.shape)} differ")
        self._check_channels(f1)
        if (s.dim() != 4 or s.shape[0] != f1.shape[0]
                or s.shape[1] != self.guidance_channels
                or s.shape[-2:] != f1.shape[-2:]):
            raise ContractError(
                f"guidance {tuple(s.shape)} does not match features "
                f"{tuple(f1.shape)} with {self.guidance_channels} channels")
        for name, t in (("f1", f1), ("f2", f2), ("s", s)):
            if not torch.isfinite(t).all():
                raise NumericError(f"non-finite values in {name}")


class CbrFusion(nn.Module):
    """Plain conv-norm-relu replacement for SeffBlock, parameter-matched.

    Consumes only the two features (the guidance argument is accepted and
    ignored, keeping the call signature interchangeable). Widths are searched
    so the parameter count lands within 5% of the equivalent SeffBlock.
    """

    def __init__(self, channels, guidance_channels=4, reduction=4):
        super().__init__()
        self.channels = channels
        self.guidance_channels = guidance_channels
        target = parameter_count(SeffBlock(channels, guidance_channels, reduction))
        mid, tails = _match_widths(channels, target)
        blocks = [ConvBlock(2 * channels, mid), ConvBlock(mid, channels)]
        blocks += [ConvBlock(channels, channels, kernel_size=1) for _ in range(tails)]
        self.body = nn.Sequential(*blocks)
        self.target_params = target

    def forward(self, f1, f2, s=None):
        if f1.shape != f2.shape or f1.shape[1] != self.channels:
            raise ContractError(
                f"expected matching [N,{self.channels},H,W] inputs, got "
                f"{tuple(f1.shape)} and {tuple(f2.shape)}")
        return self.body(torch.cat([f1, f2], dim=1))


def _cbr_params(channels, mid, tails):
    first = 9 * (2 * channels) * mid + mid + 2 * mid
    second = 9 * mid * channels + channels + 2 * channels
    tail = tails * (channels * channels + channels + 2 * channels)
    return first + second + tail


def _match_widths(channels, target):
    best = None
    for tails in range(4):
        for mid in range(1, 8 * channels + 64):
            err = abs(_cbr_params(channels, mid, tails) - target)
            if best is None or err < best[0]:
                best = (err, mid, tails)
    return best[1], best[2]


def fusion_block(channels, guidance_channels=4, reduction=4, kind="seff", seed=0):
    """Build a fusion module of the requested kind with deterministic init."""
    if kind == "seff":
        block = SeffBlock(channels, guidance_channels, reduction)
    elif kind == "cbr":
        block = CbrFusion(channels, guidance_channels, reduction)
    else:
        raise ConfigError(f"unknown fusion kind {kind!r}")
    return seeded_init_(block, seed)
