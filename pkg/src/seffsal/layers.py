"""Shared building blocks: conv stacks, normalization, seeded init, resizing."""

import math
import zlib

import torch
import torch.nn.functional as F
from torch import nn


def resize(x, size):
    """Bilinear resize to an exact (h, w); no-op when already there."""
    size = tuple(size)
    if tuple(x.shape[-2:]) == size:
        return x
    return F.interpolate(x, size=size, mode="bilinear", align_corners=False)


def norm2d(channels):
    """Group normalization; batch-independent so train and eval behave identically."""
    groups = math.gcd(channels, 4)
    return nn.GroupNorm(groups, channels)


class ChannelNorm(nn.Module):
    """Per-position normalization across channels.

    Unlike GroupNorm this uses no spatial statistics, so it is valid on 1x1
    maps and keeps pointwise layers strictly pointwise.
    """

    def __init__(self, channels, eps=1e-5):
        super().__init__()
        self.channels = channels
        self.eps = eps
        self.weight = nn.Parameter(torch.ones(1, channels, 1, 1))
        self.bias = nn.Parameter(torch.zeros(1, channels, 1, 1))

    def forward(self, x):
        mu = x.mean(dim=1, keepdim=True)
        var = x.var(dim=1, unbiased=False, keepdim=True)
        y = (x - mu) / torch.sqrt(var + self.eps)
        return y * self.weight + self.bias


class ConvBlock(nn.Module):
    """Conv -> GroupNorm -> ReLU with 'same' padding."""

    def __init__(self, in_channels, out_channels, kernel_size=3, stride=1, dilation=1):
        super().__init__()
        pad = dilation * (kernel_size - 1) // 2
        self.conv = nn.Conv2d(in_channels, out_channels, kernel_size,
                              stride=stride, padding=pad, dilation=dilation)
        self.norm = norm2d(out_channels)
        self.act = nn.ReLU(inplace=True)

    def forward(self, x):
        return self.act(self.norm(self.conv(x)))


def derive_seed(base, name):
    """Stable per-submodule seed so shared submodules init identically across variants."""
    return (int(base) * 1000003 + zlib.crc32(name.encode())) % (2**31 - 1)


def seeded_init_(module, seed):
    """Deterministic init: kaiming-uniform conv weights, zero biases, unit norms.

    Draws come from a local generator, so the surrounding global RNG state is
    irrelevant and two modules with the same structure and seed are
    parameter-identical.
    """
    gen = torch.Generator().manual_seed(int(seed))
    for m in module.modules():
        if isinstance(m, nn.Conv2d):
            fan_in = (m.in_channels // m.groups) * m.kernel_size[0] * m.kernel_size[1]
            bound = math.sqrt(6.0 / fan_in)
            with torch.no_grad():
                m.weight.copy_((torch.rand(m.weight.shape, generator=gen) * 2 - 1) * bound)
                if m.bias is not None:
                    m.bias.zero_()
        elif isinstance(m, nn.GroupNorm):
            with torch.no_grad():
                m.weight.fill_(1.0)
                m.bias.zero_()
        elif isinstance(m, ChannelNorm):
            with torch.no_grad():
                m.weight.fill_(1.0)
                m.bias.zero_()
    return module


def parameter_count(module):
    return sum(p.numel() for p in module.parameters())
