"""Per-scale, per-modality feature extractor producing a 4-layer pyramid.

A small stage-wise CNN stands in for a pretrained backbone; the interface
(4 layers at strides 4/8/16/32) is what the rest of the network relies on.
"""

from dataclasses import dataclass

from torch import nn

from .errors import ConfigError, ContractError
from .layers import ConvBlock, seeded_init_


@dataclass(frozen=True)
class BackboneConfig:
    stage_channels: tuple = (16, 32, 64, 128)
    blocks_per_stage: int = 1
    stem_stride: int = 4
    stage_stride: int = 2

    def __post_init__(self):
        cs = tuple(self.stage_channels)
        if len(cs) != 4 or any(c <= 0 for c in cs):
            raise ConfigError(f"stage_channels needs 4 positive values, got {cs}")
        if list(cs) != sorted(cs):
            raise ConfigError(f"stage_channels must be non-decreasing, got {cs}")
        if self.blocks_per_stage < 1:
            raise ConfigError("blocks_per_stage must be >= 1")
        object.__setattr__(self, "stage_channels", cs)


@dataclass
class FeaturePyramid:
    """The 4 per-layer features of one modality at one scale."""
    layers: tuple
    source_scale: int = 0
    modality: str = ""

    def __post_init__(self):
        if len(self.layers) != 4:
            raise ContractError(f"pyramid needs exactly 4 layers, got {len(self.layers)}")


# 16 keeps every layer at spatial size >= 1 and admits the 64/32/16 micro setup
MIN_INPUT_SIZE = 16


class Backbone(nn.Module):
    """Stem of two stride-2 convs, then 4 stages; stage j >= 2 halves again."""

    def __init__(self, config: BackboneConfig):
        super().__init__()
        self.config = config
        c1, c2, c3, c4 = config.stage_channels
        self.stem = nn.Sequential(
            ConvBlock(3, c1, stride=2),
            ConvBlock(c1, c1, stride=2),
        )
        widths = [c1, c2, c3, c4]
        stages = []
        prev = c1
        for j, c in enumerate(widths):
            blocks = [ConvBlock(prev, c, stride=1 if j == 0 else 2)]
            blocks += [ConvBlock(c, c) for _ in range(config.blocks_per_stage - 1)]
            stages.append(nn.Sequential(*blocks))
            prev = c
        self.stages = nn.ModuleList(stages)

    def forward(self, image):
        if image.dim() != 4 or image.shape[1] not in (1, 3):
            raise ContractError(f"expected [N,1|3,H,W], got {tuple(image.shape)}")
        if image.shape[-2] < MIN_INPUT_SIZE or image.shape[-1] < MIN_INPUT_SIZE:
            raise ContractError(
                f"input {tuple(image.shape[-2:])} below minimum {MIN_INPUT_SIZE}")
        if image.shape[1] == 1:
            # depth maps share the RGB stem; replicate to 3 channels
            image = image.expand(-1, 3, -1, -1)
        x = self.stem(image)
        feats = []
        for stage in self.stages:
            x = stage(x)
            feats.append(x)
        return tuple(feats)


def build_backbone(config: BackboneConfig, seed: int) -> Backbone:
    return seeded_init_(Backbone(config), seed)


def extract_features(backbone: Backbone, image, source_scale=0, modality="") -> FeaturePyramid:
    return FeaturePyramid(backbone(image), source_scale=source_scale, modality=modality)
