"""Saliency evaluation metrics.

Per-image: mean absolute error, best-threshold F-measure (beta^2 = 0.3 by
SOD convention), best-threshold enhanced-alignment measure, and the structure
measure (alpha = 0.5). Dataset evaluation averages per-image values; images
with empty ground truth are excluded from the F/E/S averages but kept for MAE.
"""

import csv
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ContractError, EmptyGroundTruthError

N_LEVELS = 256
LEVELS = np.arange(N_LEVELS, dtype=np.float64) / (N_LEVELS - 1)
BETA_SQ = 0.3
ALPHA = 0.5
EPS = 1e-12
ALIGN_EPS = float(np.finfo(np.float64).eps)  # guards the 0/0 alignment ratio only
_CHUNK = 64  # thresholds processed at once in the E sweep


def _check_pair(pred, gt):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ContractError(f"pred {pred.shape} and gt {gt.shape} differ")
    if pred.min() < 0 or pred.max() > 1:
        raise ContractError("pred values must lie in [0, 1]")
    if not np.isin(gt, (0.0, 1.0)).all():
        raise ContractError("gt must be binary {0, 1}")
    return pred, gt


def mae(pred, gt):
    pred, gt = _check_pair(pred, gt)
    return float(np.abs(pred - gt).mean())


def f_measure_curve(pred, gt, levels=None):
    """Precision, recall, and F arrays over the threshold sweep (0/0 -> 0)."""
    pred, gt = _check_pair(pred, gt)
    if gt.sum() == 0:
        raise EmptyGroundTruthError("ground truth has no foreground")
    levels = LEVELS if levels is None else np.asarray(levels, dtype=np.float64)
    bins = pred.reshape(1, -1) >= levels.reshape(-1, 1)
    gtb = gt.reshape(-1).astype(bool)
    tp = bins[:, gtb].sum(axis=1).astype(np.float64)
    pp = bins.sum(axis=1).astype(np.float64)
    n_fg = float(gtb.sum())
    precision = np.divide(tp, pp, out=np.zeros_like(tp), where=pp > 0)
    recall = tp / n_fg
    denom = BETA_SQ * precision + recall
    f = np.divide((1 + BETA_SQ) * precision * recall, denom,
                  out=np.zeros_like(tp), where=denom > 0)
    return precision, recall, f


def f_measure_max(pred, gt):
    return float(f_measure_curve(pred, gt)[2].max())


def e_measure_curve(pred, gt, levels=None):
    """Enhanced-alignment score per threshold.

    Degenerate ground truths follow the usual convention: all-background
    scores the background agreement 1 - mean(bin), all-foreground scores
    mean(bin).
    """
    pred, gt = _check_pair(pred, gt)
    levels = LEVELS if levels is None else np.asarray(levels, dtype=np.float64)
    flat = pred.reshape(-1)
    gtf = gt.reshape(-1)
    n = flat.size
    out = np.empty(len(levels), dtype=np.float64)
    for start in range(0, len(levels), _CHUNK):
        chunk = levels[start:start + _CHUNK]
        bins = (flat.reshape(1, -1) >= chunk.reshape(-1, 1)).astype(np.float64)
        if gtf.sum() == 0:
            out[start:start + _CHUNK] = 1 - bins.mean(axis=1)
        elif gtf.sum() == n:
            out[start:start + _CHUNK] = bins.mean(axis=1)
        else:
            phi_g = gtf - gtf.mean()
            phi_p = bins - bins.mean(axis=1, keepdims=True)
            xi = 2 * phi_p * phi_g / (phi_p ** 2 + phi_g ** 2 + ALIGN_EPS)
            out[start:start + _CHUNK] = (((xi + 1) ** 2) / 4).mean(axis=1)
    return out


def e_measure_max(pred, gt):
    return float(e_measure_curve(pred, gt).max())


def _object_score(values):
    if values.size == 0:
        return 0.0
    x = values.mean()
    sigma = values.std(ddof=1) if values.size > 1 else 0.0
    return float(2 * x / (x * x + 1 + sigma + EPS))


def _s_object(pred, gt):
    mu = gt.mean()
    fg = pred[gt > 0.5]
    bg = (1 - pred)[gt <= 0.5]
    return mu * _object_score(fg) + (1 - mu) * _object_score(bg)


def _centroid_split(gt):
    """1-based rounded foreground centroid; returns (rows above, cols left)."""
    rows, cols = gt.shape
    total = gt.sum()
    col_idx = np.arange(1, cols + 1, dtype=np.float64)
    row_idx = np.arange(1, rows + 1, dtype=np.float64)
    x = int(round(float((gt.sum(axis=0) * col_idx).sum() / total)))
    y = int(round(float((gt.sum(axis=1) * row_idx).sum() / total)))
    return y, x


def _region_ssim(p, g):
    n = p.size
    x = p.mean()
    y = g.mean()
    sx = ((p - x) ** 2).sum() / (n - 1 + EPS)
    sy = ((g - y) ** 2).sum() / (n - 1 + EPS)
    sxy = ((p - x) * (g - y)).sum() / (n - 1 + EPS)
    a = 4 * x * y * sxy
    b = (x * x + y * y) * (sx + sy)
    if a != 0:
        return float(a / (b + EPS))
    return 1.0 if b == 0 else 0.0


def _s_region(pred, gt):
    y, x = _centroid_split(gt)
    area = gt.size
    score = 0.0
    for rs, cs in ((slice(None, y), slice(None, x)), (slice(None, y), slice(x, None)),
                   (slice(y, None), slice(None, x)), (slice(y, None), slice(x, None))):
        g = gt[rs, cs]
        if g.size == 0:
            continue
        score += (g.size / area) * _region_ssim(pred[rs, cs], g)
    return score


def s_measure(pred, gt, alpha=ALPHA):
    """Structure measure: alpha-blend of object- and region-aware similarity."""
    pred, gt = _check_pair(pred, gt)
    mu = gt.mean()
    if mu == 0:
        return float(np.clip(1 - pred.mean(), 0, 1))
    if mu == 1:
        return float(np.clip(pred.mean(), 0, 1))
    s = alpha * _s_object(pred, gt) + (1 - alpha) * _s_region(pred, gt)
    return float(np.clip(s, 0, 1))


@dataclass
class ImageMetrics:
    name: str
    mae: float
    f_max: float = None
    e_max: float = None
    s_measure: float = None
    precision: np.ndarray = None
    recall: np.ndarray = None
    e_curve: np.ndarray = None

    @property
    def has_foreground(self):
        return self.f_max is not None


@dataclass
class MetricReport:
    mae: float
    f_max: float
    e_max: float
    s_measure: float
    precision_curve: np.ndarray
    recall_curve: np.ndarray
    e_curve: np.ndarray
    n_images: int
    n_skipped_empty_gt: int
    unmatched: list
    per_image: list


def evaluate_image(pred, gt, name=""):
    """All four metrics for one image; empty ground truth yields MAE only."""
    m = mae(pred, gt)
    if np.asarray(gt).sum() == 0:
        return ImageMetrics(name=name, mae=m)
    precision, recall, f = f_measure_curve(pred, gt)
    e_curve = e_measure_curve(pred, gt)
    return ImageMetrics(name=name, mae=m, f_max=float(f.max()),
                        e_max=float(e_curve.max()), s_measure=s_measure(pred, gt),
                        precision=precision, recall=recall, e_curve=e_curve)


def load_prediction(path):
    """8-bit grayscale PNG to a [0, 1] float map."""
    return np.asarray(Image.open(path).convert("L"), dtype=np.float64) / 255.0


def load_ground_truth(path):
    """Binary mask PNG; values >= 128 are foreground."""
    arr = np.asarray(Image.open(path).convert("L"))
    return (arr >= 128).astype(np.float64)


def evaluate_dataset(pred_dir, gt_dir):
    """Evaluate matching filename stems; unmatched files are warned and skipped."""
    pred_dir, gt_dir = Path(pred_dir), Path(gt_dir)
    preds = {p.stem: p for p in sorted(pred_dir.glob("*.png"))}
    gts = {p.stem: p for p in sorted(gt_dir.glob("*.png"))}
    stems = sorted(set(preds) & set(gts))
    unmatched = sorted(set(preds) ^ set(gts))
    for stem in unmatched:
        side = pred_dir if stem in preds else gt_dir
        print(f"warning: no counterpart for {side / (stem + '.png')}, skipped",
              file=sys.stderr)
    if not stems:
        raise ContractError(
            f"no matching prediction/ground-truth stems between {pred_dir} and {gt_dir}")

    per_image = [evaluate_image(load_prediction(preds[s]), load_ground_truth(gts[s]),
                                name=s) for s in stems]
    scored = [im for im in per_image if im.has_foreground]
    n_skipped = len(per_image) - len(scored)
    if n_skipped:
        print(f"warning: {n_skipped} empty-GT image(s) excluded from F/E/S averages",
              file=sys.stderr)

    def mean_of(values):
        return float(np.mean(values)) if values else float("nan")

    def mean_curve(curves):
        return np.mean(curves, axis=0) if curves else np.full(N_LEVELS, np.nan)

    return MetricReport(
        mae=mean_of([im.mae for im in per_image]),
        f_max=mean_of([im.f_max for im in scored]),
        e_max=mean_of([im.e_max for im in scored]),
        s_measure=mean_of([im.s_measure for im in scored]),
        precision_curve=mean_curve([im.precision for im in scored]),
        recall_curve=mean_curve([im.recall for im in scored]),
        e_curve=mean_curve([im.e_curve for im in scored]),
        n_images=len(per_image),
        n_skipped_empty_gt=n_skipped,
        unmatched=unmatched,
        per_image=per_image,
    )


def write_report_csv(report: MetricReport, path):
    """Per-image rows plus a mean summary row."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["name", "mae", "f_max", "e_max", "s_measure"])
        for im in report.per_image:
            if im.has_foreground:
                writer.writerow([im.name, f"{im.mae:.6f}", f"{im.f_max:.6f}",
                                 f"{im.e_max:.6f}", f"{im.s_measure:.6f}"])
            else:
                writer.writerow([im.name, f"{im.mae:.6f}", "", "", ""])
        writer.writerow(["mean", f"{report.mae:.6f}", f"{report.f_max:.6f}",
                         f"{report.e_max:.6f}", f"{report.s_measure:.6f}"])
