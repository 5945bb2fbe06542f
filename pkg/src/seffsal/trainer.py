"""Training loop, LR schedule, checkpoint IO, and single-image inference."""

import csv
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .data import Sample, load_input_pair, make_pyramid
from .errors import CheckpointError, ContractError
from .losses import ApiWeights, per_head_losses
from .net import NetConfig, SaliencyNet

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 10
    lr0: float = 5e-5
    decay_factor: float = 5.0
    decay_every: int = 40
    epochs: int = 100
    seed: int = 0
    variant: str = "full"
    lambda_bce: float = 1.0
    lambda_iou: float = 0.5
    lambda_l1: float = 0.3
    omega_mu: float = 0.5
    max_iters: int = 0          # 0 = run the full epoch budget
    checkpoint_every: int = 20
    augment_flip: bool = False

    def __post_init__(self):
        for name in ("batch_size", "lr0", "decay_factor", "decay_every", "epochs"):
            if getattr(self, name) <= 0 and not (name == "lr0" and self.lr0 == 0):
                raise ContractError(f"{name} must be positive")

    def api_weights(self):
        return ApiWeights(self.lambda_bce, self.lambda_iou, self.lambda_l1,
                          omega_mu=self.omega_mu)


def lr_schedule(epoch, cfg: TrainConfig):
    """Step decay: lr0 / decay_factor**(epoch // decay_every)."""
    if not 0 <= epoch < cfg.epochs:
        raise ContractError(f"epoch {epoch} outside [0, {cfg.epochs})")
    return cfg.lr0 / cfg.decay_factor ** (epoch // cfg.decay_every)


def _stack_batch(pyramids, gts, indices, flip_mask=None):
    scales = sorted(pyramids[0].inputs)
    rgb, depth = {}, {}
    gt_list = []
    for pos, idx in enumerate(indices):
        flip = flip_mask is not None and flip_mask[pos]
        gt = gts[idx]
        gt_list.append(torch.flip(gt, [-1]) if flip else gt)
    for i in scales:
        r = [pyramids[idx].inputs[i][0] for idx in indices]
        d = [pyramids[idx].inputs[i][1] for idx in indices]
        if flip_mask is not None:
            r = [torch.flip(t, [-1]) if f else t for t, f in zip(r, flip_mask)]
            d = [torch.flip(t, [-1]) if f else t for t, f in zip(d, flip_mask)]
        rgb[i] = torch.stack(r)
        depth[i] = torch.stack(d)
    if len({tuple(g.shape) for g in gt_list}) != 1:
        raise ContractError("samples in a batch must share a ground-truth size")
    gt = torch.stack(gt_list).unsqueeze(1)
    return rgb, depth, gt


def _check_finite(parts, epoch, it):
    for (i, j), value in parts.items():
        if not torch.isfinite(value):
            raise RuntimeError(
                f"non-finite loss at head S_{i}{j} (epoch {epoch}, iter {it})")


def train(net: SaliencyNet, samples, cfg: TrainConfig, out_dir=None):
    """Adam optimization with the step-decay schedule.

    Returns (final checkpoint path or None, loss-log rows). Each row is
    (epoch, iter, total, {head: value}, lr).
    """
    if not samples:
        raise ContractError("dataset is empty")
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    sizes = net.config.scale_sizes
    pyramids = [make_pyramid(s, net.active_scales, sizes) for s in samples]
    gts = [s.gt for s in samples]
    weights = cfg.api_weights()
    optimizer = torch.optim.Adam(net.parameters(), lr=cfg.lr0,
                                 betas=(0.9, 0.999), eps=1e-8)
    order_rng = np.random.default_rng(cfg.seed)
    rows = []
    it = 0
    ckpt_path = None
    stop = False
    for epoch in range(cfg.epochs):
        lr = lr_schedule(epoch, cfg)
        for group in optimizer.param_groups:
            group["lr"] = lr
        perm = order_rng.permutation(len(samples))
        for start in range(0, len(samples), cfg.batch_size):
            indices = perm[start:start + cfg.batch_size]
            flip_mask = (order_rng.random(len(indices)) < 0.5
                         if cfg.augment_flip else None)
            rgb, depth, gt = _stack_batch(pyramids, gts, indices, flip_mask)
            optimizer.zero_grad()
            bundle = net(rgb, depth)
            parts = per_head_losses(bundle, gt, weights)
            _check_finite(parts, epoch, it)
            loss = sum(parts.values())
            loss.backward()
            optimizer.step()
            it += 1
            rows.append((epoch, it, float(loss.detach()),
                         {k: float(v.detach()) for k, v in parts.items()}, lr))
            if cfg.max_iters and it >= cfg.max_iters:
                stop = True
                break
        if out_dir is not None and (epoch + 1) % cfg.checkpoint_every == 0:
            save_checkpoint(out_dir / f"ckpt_epoch{epoch + 1:04d}.pt",
                            net, optimizer, epoch + 1, cfg)
        if stop:
            break
    if out_dir is not None:
        ckpt_path = out_dir / "ckpt_final.pt"
        save_checkpoint(ckpt_path, net, optimizer, epoch + 1, cfg)
        write_loss_log(rows, net.active_scales, out_dir / "loss_log.csv")
    return ckpt_path, rows


def write_loss_log(rows, scales, path):
    heads = [(i, j) for i in sorted(scales) for j in range(1, 5)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "iter", "total"]
                        + [f"s{i}l{j}" for i, j in heads] + ["lr"])
        for epoch, it, total, parts, lr in rows:
            writer.writerow([epoch, it, f"{total:.8f}"]
                            + [f"{parts[h]:.8f}" for h in heads] + [f"{lr:.3e}"])


def save_checkpoint(path, net: SaliencyNet, optimizer=None, epoch=0, cfg=None):
    payload = {
        "format_version": CHECKPOINT_VERSION,
        "net_config": asdict(net.config),
        "active_scales": tuple(net.active_scales),
        "seed": net.seed,
        "epoch": epoch,
        "model": net.state_dict(),
        "optimizer": optimizer.state_dict() if optimizer is not None else None,
        "train_config": asdict(cfg) if cfg is not None else None,
    }
    torch.save(payload, path)
    return path


def load_checkpoint(path):
    payload = torch.load(path, weights_only=True)
    version = payload.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"checkpoint format {version} unsupported (expected {CHECKPOINT_VERSION})")
    return payload


def restore_net(payload, expected_config: NetConfig = None, expected_scales=None):
    """Rebuild the network from a checkpoint, rejecting architecture mismatches."""
    config = NetConfig(**payload["net_config"])
    scales = tuple(payload["active_scales"])
    if expected_config is not None and asdict(config) != asdict(expected_config):
        raise CheckpointError(
            f"checkpoint architecture {asdict(config)} does not match the "
            f"requested configuration {asdict(expected_config)}")
    if expected_scales is not None and scales != tuple(expected_scales):
        raise CheckpointError(
            f"checkpoint was trained with scales {scales}, requested "
            f"{tuple(expected_scales)}")
    net = SaliencyNet(config, scales, seed=payload["seed"])
    net.load_state_dict(payload["model"])
    return net


def predict_sample(net: SaliencyNet, rgb, depth, out_size):
    """Final saliency map for one rgb/depth pair, resized to out_size, in [0,1]."""
    pyramid = make_pyramid_from_pair(rgb, depth, net)
    with torch.no_grad():
        bundle = net({i: t[0].unsqueeze(0) for i, t in pyramid.items()},
                     {i: t[1].unsqueeze(0) for i, t in pyramid.items()})
        final = torch.nn.functional.interpolate(
            bundle.final(), size=tuple(out_size), mode="bilinear",
            align_corners=False)
    return final[0, 0].clamp(0, 1)


def make_pyramid_from_pair(rgb, depth, net: SaliencyNet):
    dummy_gt = torch.zeros(rgb.shape[-2:])
    sample = Sample(rgb=rgb, depth=depth, gt=dummy_gt, id="input")
    pyr = make_pyramid(sample, net.active_scales, net.config.scale_sizes)
    return pyr.inputs


def infer(net_or_checkpoint, rgb_path, depth_path, out_path,
          expected_config: NetConfig = None, expected_scales=None):
    """Run one image through the detector and save the prediction PNG."""
    if isinstance(net_or_checkpoint, SaliencyNet):
        net = net_or_checkpoint
    else:
        payload = load_checkpoint(net_or_checkpoint)
        net = restore_net(payload, expected_config, expected_scales)
    net.eval()
    rgb, depth, size = load_input_pair(rgb_path, depth_path)
    out = predict_sample(net, rgb, depth, size)
    arr = (out.numpy() * 255).round().astype(np.uint8)
    Image.fromarray(arr).save(out_path)
    return out_path
