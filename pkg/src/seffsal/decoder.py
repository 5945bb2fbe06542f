"""Top-down pyramid refinement decoder.

Each stage squeezes its input pointwise, mixes context through parallel
dilated depthwise convolutions, and keeps a residual path. Stage j consumes
the upsampled output of stage j+1 plus a projected encoder skip, so decoder
feature j always sits at encoder layer j's resolution.
"""

import torch.nn.functional as F
from torch import nn

from .errors import ContractError
from .layers import ConvBlock, norm2d, resize


class DecoderStage(nn.Module):
    def __init__(self, in_channels, out_channels, dilations=(1, 2, 4)):
        super().__init__()
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.entry = ConvBlock(in_channels, out_channels, kernel_size=1)
        self.branches = nn.ModuleList([
            nn.Conv2d(out_channels, out_channels, 3, padding=d, dilation=d,
                      groups=out_channels, bias=False)
            for d in dilations
        ])
        self.branch_norm = norm2d(out_channels)
        self.merge = nn.Conv2d(out_channels, out_channels, 1)
        self.merge_norm = norm2d(out_channels)

    def forward(self, x):
        y = self.entry(x)
        b = F.relu(self.branch_norm(sum(branch(y) for branch in self.branches)))
        z = self.merge_norm(self.merge(b))
        return F.relu(y + z)


class CprDecoder(nn.Module):
    """4-stage decoder over one encoder pyramid with a fused deepest feature."""

    def __init__(self, encoder_channels, out_channels):
        super().__init__()
        c1, c2, c3, c4 = encoder_channels
        self.out_channels = out_channels
        self.stages = nn.ModuleList([
            DecoderStage(out_channels, out_channels),  # j=1
            DecoderStage(out_channels, out_channels),  # j=2
            DecoderStage(out_channels, out_channels),  # j=3
            DecoderStage(c4, out_channels),            # j=4, eats the fused feature
        ])
        self.skips = nn.ModuleList([
            nn.Conv2d(c, out_channels, 1) for c in (c1, c2, c3)
        ])

    def forward(self, pyramid, fused_top):
        layers = pyramid.layers
        if fused_top.shape[-2:] != layers[3].shape[-2:]:
            raise ContractError(
                f"fused top {tuple(fused_top.shape[-2:])} does not match "
                f"layer 4 {tuple(layers[3].shape[-2:])}")
        feats = [None] * 4
        feats[3] = self.stages[3](fused_top)
        for j in (2, 1, 0):
            target = layers[j].shape[-2:]
            up = resize(feats[j + 1], target)
            x = up + self.skips[j](layers[j])
            if x.shape[-2:] != target:
                raise ContractError(f"decoder stage {j + 1} resolution drifted")
            feats[j] = self.stages[j](x)
        return feats


def decode(decoder: CprDecoder, pyramid, fused_top):
    """Decoder features for layers 1..4 (index 0 is the finest)."""
    return decoder(pyramid, fused_top)
