"""Full detector assembly.

Three input scales run independent RGB and depth encoders. Only the deepest
(4th) encoder layer is fused across modalities; each scale is then decoded
top-down, and decoder features of neighboring scales are fused coarse-to-fine
(scale 3 feeds 2, scale 2 feeds 1). Every decoder/fusion feature carries a
1-channel sigmoid head, giving 4 saliency maps per active scale. Coarser
scales run first because their maps guide the finer ones.
"""

from dataclasses import dataclass

import torch
from torch import nn

from .backbone import Backbone, BackboneConfig, extract_features
from .decoder import CprDecoder
from .errors import ConfigError, ContractError, WiringError
from .layers import derive_seed, parameter_count, resize, seeded_init_
from .seff import CbrFusion, SeffBlock, fusion_block

GUIDANCE_CHANNELS = 4

VARIANT_SCALES = {"full": (1, 2, 3), "scale2": (2, 3), "scale1": (3,)}


@dataclass(frozen=True)
class NetConfig:
    stage_channels: tuple = (16, 32, 64, 128)
    blocks_per_stage: int = 1
    decoder_channels: int = 32
    reduction: int = 4
    scale_sizes: tuple = (352, 176, 88)  # input side length for scales 1, 2, 3
    fusion: str = "seff"

    def __post_init__(self):
        if self.fusion not in ("seff", "cbr"):
            raise ConfigError(f"fusion must be 'seff' or 'cbr', got {self.fusion!r}")
        sizes = tuple(self.scale_sizes)
        if len(sizes) != 3 or list(sizes) != sorted(sizes, reverse=True):
            raise ConfigError(f"scale_sizes must be 3 descending values, got {sizes}")
        object.__setattr__(self, "scale_sizes", sizes)
        object.__setattr__(self, "stage_channels", tuple(self.stage_channels))

    def backbone_config(self):
        return BackboneConfig(self.stage_channels, self.blocks_per_stage)


@dataclass
class GuidanceMap:
    """4-channel saliency tensor injected into a fusion site."""
    tensor: torch.Tensor
    provenance: str  # zeros | scale3 | scale23

    def __post_init__(self):
        if self.tensor.shape[1] != GUIDANCE_CHANNELS:
            raise ContractError(
                f"guidance needs {GUIDANCE_CHANNELS} channels, got {self.tensor.shape[1]}")
        if self.provenance == "zeros" and bool((self.tensor != 0).any()):
            raise ContractError("zero-provenance guidance contains nonzero entries")


@dataclass
class SaliencyBundle:
    """Predicted maps keyed by (scale, layer), each [N,1,h,w] in (0,1)."""
    maps: dict
    scales: tuple

    def __post_init__(self):
        expected = {(i, j) for i in self.scales for j in range(1, 5)}
        if set(self.maps) != expected:
            raise ContractError(
                f"bundle keys {sorted(self.maps)} do not cover scales {self.scales}")

    def final(self):
        """Finest-scale layer-1 map, the map used as the detector's prediction."""
        return self.maps[(min(self.scales), 1)]


def variant_scales(variant):
    if isinstance(variant, str):
        if variant not in VARIANT_SCALES:
            raise ConfigError(f"unknown variant {variant!r}")
        return VARIANT_SCALES[variant]
    scales = tuple(sorted(variant))
    if 3 not in scales:
        raise ConfigError(f"variant {scales} lacks scale 3, which seeds guidance")
    if scales not in VARIANT_SCALES.values():
        raise ConfigError(f"unsupported scale set {scales}")
    return scales


def _trace(trace, **event):
    if trace is not None:
        trace.append(event)


def build_guidance(bundle_parts, for_scale, target_size, projector=None,
                   like=None, trace=None, site="rgbd", layer=None):
    """Guidance for a fusion site of `for_scale` at `target_size`.

    Scale 3 gets zero maps; scale 2 gets the four scale-3 maps resized and
    stacked; scale 1 projects the eight scale-2/3 maps down to 4 channels.
    """
    maps = bundle_parts.maps if isinstance(bundle_parts, SaliencyBundle) else bundle_parts
    target_size = tuple(target_size)

    def gather(scale):
        resized = []
        for j in range(1, 5):
            if (scale, j) not in maps:
                raise WiringError(
                    f"guidance for scale {for_scale} needs map ({scale},{j}) "
                    "which has not been produced yet")
            _trace(trace, event="read_map", scale=scale, layer=j,
                   consumer=f"guidance:{site}:scale{for_scale}")
            resized.append(resize(maps[(scale, j)], target_size))
        return torch.cat(resized, dim=1)

    if for_scale == 3:
        if like is None:
            raise ContractError("scale-3 guidance needs a reference tensor for shape")
        tensor = like.new_zeros(like.shape[0], GUIDANCE_CHANNELS, *target_size)
        g = GuidanceMap(tensor, "zeros")
    elif for_scale == 2:
        g = GuidanceMap(gather(3), "scale3")
    elif for_scale == 1:
        if projector is None:
            raise ContractError("scale-1 guidance needs the 8->4 projector")
        stacked = torch.cat([gather(2), gather(3)], dim=1)
        g = GuidanceMap(projector(stacked), "scale23")
    else:
        raise ContractError(f"no guidance defined for scale {for_scale}")
    _trace(trace, event="guidance", for_scale=for_scale, site=site, layer=layer,
           provenance=g.provenance, tensor=g.tensor.detach())
    return g


def fuse_rgbd(block, f_r, f_d, g: GuidanceMap, trace=None, scale=None):
    """Merge the layer-4 RGB and depth features of one scale."""
    if f_r.shape != f_d.shape:
        raise ContractError(
            f"rgb {tuple(f_r.shape)} and depth {tuple(f_d.shape)} features differ")
    _trace(trace, event="fuse_rgbd", scale=scale, provenance=g.provenance)
    return block(f_r, f_d, g.tensor)


def fuse_cross_scale(block, f_fine, f_coarse, g: GuidanceMap, for_scale,
                     trace=None, layer=None, coarse_source=None):
    """Merge a decoder feature with its neighbor from the next-coarser scale."""
    if for_scale not in (1, 2):
        raise ContractError(
            "cross-scale fusion is only carried out on the first and second scales")
    if f_fine.shape[-2:] != f_coarse.shape[-2:]:
        raise ContractError("coarse feature must be resized to the fine grid first")
    _trace(trace, event="fuse_cross_scale", scale=for_scale, layer=layer,
           coarse_source=coarse_source)
    return block(f_fine, f_coarse, g.tensor)


def predict_head(feature, head):
    """1-channel sigmoid prediction from a decoder or fusion feature."""
    return torch.sigmoid(head(feature))


class SaliencyNet(nn.Module):
    """Detector over a chosen set of active scales (3 is always present)."""

    def __init__(self, config: NetConfig, active_scales=(1, 2, 3), seed=0):
        super().__init__()
        self.config = config
        self.active_scales = variant_scales(active_scales)
        self.seed = seed
        c4 = config.stage_channels[3]
        d = config.decoder_channels
        bcfg = config.backbone_config()

        parts = {}
        for i in self.active_scales:
            parts[f"s{i}_rgb"] = Backbone(bcfg)
            parts[f"s{i}_depth"] = Backbone(bcfg)
            parts[f"s{i}_fuse"] = fusion_block(
                c4, GUIDANCE_CHANNELS, config.reduction, config.fusion)
            parts[f"s{i}_dec"] = CprDecoder(config.stage_channels, d)
            for j in range(1, 5):
                parts[f"s{i}_head{j}"] = nn.Conv2d(d, 1, 1)
            if i < 3:
                for j in range(1, 5):
                    parts[f"s{i}_cross{j}"] = fusion_block(
                        d, GUIDANCE_CHANNELS, config.reduction, config.fusion)
        if 1 in self.active_scales and config.fusion == "seff":
            # separate 8->4 projectors for the RGB-D site and the cross-scale sites
            parts["s1_fuse_guide"] = nn.Conv2d(2 * GUIDANCE_CHANNELS, GUIDANCE_CHANNELS, 1)
            parts["s1_cross_guide"] = nn.Conv2d(2 * GUIDANCE_CHANNELS, GUIDANCE_CHANNELS, 1)
        self.parts = nn.ModuleDict(parts)
        for name, module in self.parts.items():
            seeded_init_(module, derive_seed(seed, name))

    def _part(self, name):
        return self.parts[name] if name in self.parts else None

    @property
    def uses_guidance(self):
        return self.config.fusion == "seff"

    def expected_size(self, scale):
        return self.config.scale_sizes[scale - 1]

    def _check_inputs(self, rgb, depth):
        batch = None
        for i in self.active_scales:
            if i not in rgb or i not in depth:
                raise ContractError(f"missing inputs for scale {i}")
            want = (self.expected_size(i), self.expected_size(i))
            for name, t in (("rgb", rgb[i]), ("depth", depth[i])):
                if t.dim() != 4 or tuple(t.shape[-2:]) != want:
                    raise ContractError(
                        f"{name} input for scale {i} must be [N,*,{want[0]},{want[1]}], "
                        f"got {tuple(t.shape)}")
                if batch is None:
                    batch = t.shape[0]
                elif t.shape[0] != batch:
                    raise ContractError("inconsistent batch size across scale inputs")

    def forward(self, rgb, depth, trace=None):
        """rgb/depth: {scale: tensor} at the configured sizes. Coarse scales first."""
        self._check_inputs(rgb, depth)
        maps = {}
        cpr = {}
        csf = {}
        for i in sorted(self.active_scales, reverse=True):
            r_py = extract_features(self.parts[f"s{i}_rgb"], rgb[i], i, "rgb")
            d_py = extract_features(self.parts[f"s{i}_depth"], depth[i], i, "depth")
            top = r_py.layers[3]
            if self.uses_guidance:
                g = build_guidance(maps, i, top.shape[-2:],
                                   projector=self._part("s1_fuse_guide"),
                                   like=top, trace=trace, site="rgbd")
                fused = fuse_rgbd(self.parts[f"s{i}_fuse"], top, d_py.layers[3], g,
                                  trace=trace, scale=i)
            else:
                _trace(trace, event="fuse_rgbd", scale=i, provenance=None)
                fused = self.parts[f"s{i}_fuse"](top, d_py.layers[3])
            dec = self.parts[f"s{i}_dec"](r_py, fused)
            cpr[i] = dec

            if i == 3:
                for j in range(1, 5):
                    maps[(3, j)] = predict_head(dec[j - 1], self.parts[f"s3_head{j}"])
                    _trace(trace, event="write_map", scale=3, layer=j)
                continue

            csf[i] = [None] * 4
            for j in range(1, 5):
                fine = dec[j - 1]
                if i == 2:
                    coarse, src = cpr[3][j - 1], ("cpr", 3)
                else:
                    coarse, src = csf[2][j - 1], ("csf", 2)
                coarse = resize(coarse, fine.shape[-2:])
                if self.uses_guidance:
                    g = build_guidance(maps, i, fine.shape[-2:],
                                       projector=self._part("s1_cross_guide"),
                                       trace=trace, site="cross", layer=j)
                    out = fuse_cross_scale(self.parts[f"s{i}_cross{j}"], fine, coarse,
                                           g, i, trace=trace, layer=j, coarse_source=src)
                else:
                    _trace(trace, event="fuse_cross_scale", scale=i, layer=j,
                           coarse_source=src)
                    out = self.parts[f"s{i}_cross{j}"](fine, coarse)
                csf[i][j - 1] = out
                maps[(i, j)] = predict_head(out, self.parts[f"s{i}_head{j}"])
                _trace(trace, event="write_map", scale=i, layer=j)

        return SaliencyBundle(maps=maps, scales=self.active_scales)


def build_variant(config: NetConfig, variant, seed=0):
    """Construct a network for a named variant; only needed modules exist."""
    return SaliencyNet(config, variant_scales(variant), seed=seed)


def count_parameters(net):
    return parameter_count(net)
