"""Dataset loading, scale pyramids, and synthetic RGB-D sample generation.

Directory layout: <root>/RGB/*.png|jpg, <root>/depth/*.png, <root>/GT/*.png,
matched by filename stem. Synthetic datasets add a manifest.json with the
generator settings.
"""

import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image

from .errors import ConfigError, ContractError, SampleLoadError

SCALE_SIZES = (352, 176, 88)  # input side length for scales 1, 2, 3
MIN_CANVAS = 64


@dataclass
class Sample:
    """One aligned RGB image, depth map, and binary mask, all in [0, 1]."""
    rgb: torch.Tensor      # [3, H, W]
    depth: torch.Tensor    # [1, H, W]
    gt: torch.Tensor       # [H, W], values in {0, 1}
    id: str
    meta: dict = field(default_factory=dict)


@dataclass
class ScalePyramid:
    """Per-scale (rgb, depth) inputs plus the full-resolution ground truth."""
    inputs: dict            # scale -> (rgb [3,s,s], depth [1,s,s])
    gt: torch.Tensor


def env_workers(default=4):
    """Loader concurrency, capped by SEFFSAL_NUM_WORKERS."""
    cap = os.environ.get("SEFFSAL_NUM_WORKERS")
    if cap is not None:
        try:
            return max(1, int(cap))
        except ValueError:
            raise ConfigError(f"SEFFSAL_NUM_WORKERS must be an integer, got {cap!r}")
    return default


def load_sample(rgb_path, depth_path, gt_path) -> Sample:
    """Load and normalize one sample; sizes of the three files must agree."""
    try:
        rgb_img = Image.open(rgb_path).convert("RGB")
        depth_img = Image.open(depth_path).convert("L")
        gt_img = Image.open(gt_path).convert("L")
    except Exception as exc:
        raise SampleLoadError(
            f"failed to decode one of {rgb_path}, {depth_path}, {gt_path}: {exc}")
    if not (rgb_img.size == depth_img.size == gt_img.size):
        raise SampleLoadError(
            f"size mismatch: {rgb_path} is {rgb_img.size}, {depth_path} is "
            f"{depth_img.size}, {gt_path} is {gt_img.size}")

    rgb = torch.from_numpy(np.asarray(rgb_img, dtype=np.float32) / 255.0)
    rgb = rgb.permute(2, 0, 1).contiguous()
    depth_raw = torch.from_numpy(np.asarray(depth_img, dtype=np.float32))
    span = depth_raw.max() - depth_raw.min()
    # per-image min-max normalization; a constant map becomes all zeros
    depth = (depth_raw - depth_raw.min()) / span if span > 0 else torch.zeros_like(depth_raw)
    gt = (torch.from_numpy(np.asarray(gt_img, dtype=np.float32)) >= 128).float()
    return Sample(rgb=rgb, depth=depth.unsqueeze(0), gt=gt, id=Path(rgb_path).stem)


def load_input_pair(rgb_path, depth_path):
    """RGB and depth tensors for inference, plus the original (H, W)."""
    try:
        rgb_img = Image.open(rgb_path).convert("RGB")
        depth_img = Image.open(depth_path).convert("L")
    except Exception as exc:
        raise SampleLoadError(f"failed to decode {rgb_path} or {depth_path}: {exc}")
    if rgb_img.size != depth_img.size:
        raise SampleLoadError(
            f"size mismatch: {rgb_path} is {rgb_img.size}, {depth_path} is "
            f"{depth_img.size}")
    rgb = torch.from_numpy(np.asarray(rgb_img, dtype=np.float32) / 255.0)
    rgb = rgb.permute(2, 0, 1).contiguous()
    depth_raw = torch.from_numpy(np.asarray(depth_img, dtype=np.float32))
    span = depth_raw.max() - depth_raw.min()
    depth = (depth_raw - depth_raw.min()) / span if span > 0 else torch.zeros_like(depth_raw)
    return rgb, depth.unsqueeze(0), (rgb_img.height, rgb_img.width)


def make_pyramid(sample: Sample, active_scales=(1, 2, 3),
                 scale_sizes=SCALE_SIZES) -> ScalePyramid:
    """Bilinear-resize rgb and depth to each active scale; gt stays full-size."""
    inputs = {}
    for i in active_scales:
        size = scale_sizes[i - 1]
        rgb = F.interpolate(sample.rgb.unsqueeze(0), size=(size, size),
                            mode="bilinear", align_corners=False)[0]
        depth = F.interpolate(sample.depth.unsqueeze(0), size=(size, size),
                              mode="bilinear", align_corners=False)[0]
        inputs[i] = (rgb, depth)
    return ScalePyramid(inputs=inputs, gt=sample.gt)


def _smoothstep(x):
    return np.clip(x, 0.0, 1.0)


def _draw_shape(rng, height, width):
    """Hard inside-mask and antialiased coverage for one random shape."""
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    min_side = min(height, width)
    cy = rng.uniform(0.2, 0.8) * height
    cx = rng.uniform(0.2, 0.8) * width
    if rng.random() < 0.5:
        a = rng.uniform(0.10, 0.24) * min_side
        b = rng.uniform(0.10, 0.24) * min_side
        theta = rng.uniform(0, np.pi)
        dx, dy = xx - cx, yy - cy
        u = dx * np.cos(theta) + dy * np.sin(theta)
        v = -dx * np.sin(theta) + dy * np.cos(theta)
        q = np.sqrt((u / a) ** 2 + (v / b) ** 2)
        dist = (q - 1.0) * min(a, b)  # approximate signed distance in pixels
    else:
        hx = rng.uniform(0.09, 0.22) * min_side
        hy = rng.uniform(0.09, 0.22) * min_side
        dist = np.maximum(np.abs(xx - cx) - hx, np.abs(yy - cy) - hy)
    mask = dist <= 0
    coverage = _smoothstep(0.5 - dist)
    return mask, coverage


def synth_generate(seed, n, canvas=(128, 128)):
    """Deterministic synthetic RGB-D samples: textured background, 1-3 salient
    shapes, depth from per-object disparity over a background gradient."""
    if n < 1:
        raise ConfigError("n must be >= 1")
    height, width = canvas
    if height < MIN_CANVAS or width < MIN_CANVAS:
        raise ConfigError(f"canvas {canvas} below minimum {MIN_CANVAS}x{MIN_CANVAS}")
    rng = np.random.default_rng(seed)
    samples = []
    for k in range(n):
        yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
        xs, ys = xx / width, yy / height
        base = rng.uniform(0.2, 0.65, size=3)
        grad = rng.uniform(-0.2, 0.2, size=(3, 2))
        freq = rng.uniform(2.0, 6.0, size=2)
        phase = rng.uniform(0, 2 * np.pi)
        texture = 0.05 * np.sin(2 * np.pi * (freq[0] * xs + freq[1] * ys) + phase)
        rgb = np.stack([base[c] + grad[c, 0] * xs + grad[c, 1] * ys + texture
                        for c in range(3)])
        rgb += rng.normal(0, 0.02, size=rgb.shape)

        n_obj = int(rng.integers(1, 4))
        depth = rng.uniform(0.0, 0.3) + 0.25 * (grad[0, 0] * xs + grad[0, 1] * ys + xs) / 2
        gt = np.zeros((height, width), dtype=bool)
        for o in range(n_obj):
            mask, coverage = _draw_shape(rng, height, width)
            if rng.random() < 0.5:
                # camouflaged: color close to the background, so only the
                # depth channel separates the object
                color = np.clip(base + rng.uniform(-0.08, 0.08, size=3), 0, 1)
            else:
                color = rng.uniform(0.1, 0.9, size=3)
            rgb = rgb * (1 - coverage) + color[:, None, None] * coverage
            disparity = 0.55 + 0.4 * (o + 1) / n_obj  # later shapes sit nearer
            depth = np.where(mask, disparity, depth)
            gt |= mask
        depth += rng.normal(0, 0.015, size=depth.shape)
        depth = np.clip(depth, 0, 1)
        depth = (depth - depth.min()) / (depth.max() - depth.min())
        rgb = np.clip(rgb, 0, 1)

        frac = gt.mean()
        assert 0.02 <= frac <= 0.6, f"foreground fraction {frac:.3f} out of range"
        samples.append(Sample(
            rgb=torch.from_numpy(rgb.astype(np.float32)),
            depth=torch.from_numpy(depth.astype(np.float32)).unsqueeze(0),
            gt=torch.from_numpy(gt.astype(np.float32)),
            id=f"synth_{k:04d}",
            meta={"n_objects": n_obj, "foreground_fraction": float(frac)},
        ))
    return samples


def write_dataset(samples, root, manifest=None):
    """Write samples in the standard layout; 8-bit PNGs throughout."""
    root = Path(root)
    for sub in ("RGB", "depth", "GT"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    for s in samples:
        rgb = (s.rgb.numpy().transpose(1, 2, 0) * 255).round().astype(np.uint8)
        depth = (s.depth[0].numpy() * 255).round().astype(np.uint8)
        gt = (s.gt.numpy() * 255).astype(np.uint8)
        Image.fromarray(rgb).save(root / "RGB" / f"{s.id}.png")
        Image.fromarray(depth).save(root / "depth" / f"{s.id}.png")
        Image.fromarray(gt).save(root / "GT" / f"{s.id}.png")
    if manifest is not None:
        (root / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return root


def load_dataset(root, workers=None):
    """Load all stem-matched samples under the standard layout, sorted by stem."""
    root = Path(root)
    rgb_files = {p.stem: p for ext in ("*.png", "*.jpg")
                 for p in (root / "RGB").glob(ext)}
    depth_files = {p.stem: p for p in (root / "depth").glob("*.png")}
    gt_files = {p.stem: p for p in (root / "GT").glob("*.png")}
    stems = sorted(set(rgb_files) & set(depth_files) & set(gt_files))
    if not stems:
        raise SampleLoadError(f"no complete samples under {root}")
    for stem in sorted(set(rgb_files) | set(depth_files) | set(gt_files)):
        if stem not in stems:
            print(f"warning: incomplete sample {stem!r} under {root}, skipped",
                  file=sys.stderr)
    workers = env_workers() if workers is None else max(1, workers)
    jobs = [(rgb_files[s], depth_files[s], gt_files[s]) for s in stems]
    if workers == 1:
        return [load_sample(*job) for job in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        # map() yields in submission order, so loading stays deterministic
        return list(pool.map(lambda job: load_sample(*job), jobs))
