"""Command-line entry point: train / infer / eval / ablate / synth."""

import argparse
import csv
import sys
from dataclasses import replace
from pathlib import Path

from .config import config_keys_help, format_run_config, load_run_config
from .data import load_dataset, synth_generate, write_dataset
from .errors import (CheckpointError, ConfigError, ContractError,
                     SampleLoadError)
from .layers import parameter_count
from .metrics import evaluate_dataset, write_report_csv
from .net import build_variant, variant_scales
from .trainer import infer, predict_sample, train

import numpy as np
from PIL import Image


def _load_config(args):
    cfg = load_run_config(args.config, args.set or ())
    if getattr(args, "out", None):
        cfg = replace(cfg, out_dir=args.out)
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def cmd_train(args):
    cfg = _load_config(args)
    if not cfg.dataset_dir:
        raise ConfigError("config key 'dataset_dir' is required for training")
    if not Path(cfg.dataset_dir).is_dir():
        raise ConfigError(f"config key 'dataset_dir' points to a missing "
                          f"directory: {cfg.dataset_dir}")
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config_resolved.txt").write_text(format_run_config(cfg))
    samples = load_dataset(cfg.dataset_dir)
    net = build_variant(cfg.net_config(), cfg.variant, seed=cfg.seed)
    print(f"training variant={cfg.variant} fusion={cfg.fusion} "
          f"params={parameter_count(net)} on {len(samples)} samples")
    ckpt, rows = train(net, samples, cfg.train_config(), out_dir=out_dir)
    print(f"wrote {ckpt} after {len(rows)} iterations "
          f"(final loss {rows[-1][2]:.4f})")
    return 0


def cmd_infer(args):
    expected_config = expected_scales = None
    if args.config or args.set:
        cfg = _load_config(args)
        expected_config = cfg.net_config()
        expected_scales = variant_scales(cfg.variant)
    out = infer(args.checkpoint, args.rgb, args.depth, args.out,
                expected_config, expected_scales)
    print(f"wrote {out}")
    return 0


def cmd_eval(args):
    report = evaluate_dataset(args.pred, args.gt)
    write_report_csv(report, args.out)
    print(f"images={report.n_images} skipped_empty_gt={report.n_skipped_empty_gt}")
    print(f"MAE={report.mae:.4f} maxF={report.f_max:.4f} "
          f"maxE={report.e_max:.4f} S={report.s_measure:.4f}")
    print(f"wrote {args.out}")
    return 0


ABLATION_VARIANTS = (
    ("full", "full", "seff"),
    ("scale2", "scale2", "seff"),
    ("scale1", "scale1", "seff"),
    ("wo_seff", "full", "cbr"),
)


def ablation_table(cfg, out_dir, log=print):
    """Build (and optionally train + evaluate) the four ablation variants."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    train_samples = test_samples = None
    gt_dir = None
    if cfg.ablate_train:
        pool = synth_generate(cfg.seed, cfg.ablate_train_n + cfg.ablate_test_n,
                              canvas=(cfg.synth_canvas, cfg.synth_canvas))
        train_samples = pool[:cfg.ablate_train_n]
        test_samples = pool[cfg.ablate_train_n:]
        gt_dir = out_dir / "test_gt"
        gt_dir.mkdir(exist_ok=True)
        for s in test_samples:
            arr = (s.gt.numpy() * 255).astype(np.uint8)
            Image.fromarray(arr).save(gt_dir / f"{s.id}.png")

    for name, variant, fusion in ABLATION_VARIANTS:
        net_cfg = replace(cfg.net_config(), fusion=fusion)
        net = build_variant(net_cfg, variant, seed=cfg.seed)
        row = {"variant": name, "params": parameter_count(net)}
        if cfg.ablate_train:
            tcfg = replace(cfg.train_config(), variant=variant,
                           max_iters=cfg.ablate_iters)
            train(net, train_samples, tcfg, out_dir=None)
            net.eval()
            pred_dir = out_dir / f"preds_{name}"
            pred_dir.mkdir(exist_ok=True)
            for s in test_samples:
                pred = predict_sample(net, s.rgb, s.depth, s.gt.shape)
                arr = (pred.numpy() * 255).round().astype(np.uint8)
                Image.fromarray(arr).save(pred_dir / f"{s.id}.png")
            report = evaluate_dataset(pred_dir, gt_dir)
            row.update(mae=report.mae, f_max=report.f_max, e_max=report.e_max,
                       s_measure=report.s_measure)
        rows.append(row)
        log(f"{name}: params={row['params']}"
            + (f" MAE={row['mae']:.4f} maxF={row['f_max']:.4f} "
               f"maxE={row['e_max']:.4f} S={row['s_measure']:.4f}"
               if cfg.ablate_train else ""))
    return rows


def cmd_ablate(args):
    cfg = _load_config(args)
    out_dir = Path(cfg.out_dir)
    rows = ablation_table(cfg, out_dir)
    columns = ["variant", "params", "mae", "f_max", "e_max", "s_measure"]
    with open(out_dir / "ablation.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([row.get(c, "") for c in columns])
    print(f"wrote {out_dir / 'ablation.csv'}")
    return 0


def cmd_synth(args):
    cfg = _load_config(args)
    out_dir = Path(cfg.out_dir)
    samples = synth_generate(cfg.seed, cfg.synth_n,
                             canvas=(cfg.synth_canvas, cfg.synth_canvas))
    manifest = {"seed": cfg.seed, "n": cfg.synth_n,
                "canvas": [cfg.synth_canvas, cfg.synth_canvas],
                "ids": [s.id for s in samples]}
    write_dataset(samples, out_dir, manifest)
    print(f"wrote {len(samples)} samples to {out_dir}")
    return 0


def _add_common(parser, keys):
    parser.add_argument("--config", help="path to a key=value config file")
    parser.add_argument("--set", action="append", metavar="K=V",
                        help="override a config key (repeatable)")
    parser.add_argument("--out", help="output directory (overrides out_dir)")
    parser.add_argument("--seed", type=int, help="override the config seed")
    parser.epilog = "config keys read by this subcommand:\n" + keys
    parser.formatter_class = argparse.RawDescriptionHelpFormatter


def build_parser():
    parser = argparse.ArgumentParser(prog="seffsal",
                                     description=__doc__.strip())
    sub = parser.add_subparsers(dest="command", required=True)
    all_keys = config_keys_help()

    p = sub.add_parser("train", help="train a detector on a dataset directory")
    _add_common(p, all_keys)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="predict a saliency map for one RGB-D pair")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--rgb", required=True)
    p.add_argument("--depth", required=True)
    p.add_argument("--out", required=True, help="output PNG path")
    p.add_argument("--config", help="optional config to validate compatibility")
    p.add_argument("--set", action="append", metavar="K=V")
    p.add_argument("--seed", type=int)
    p.epilog = ("config keys read (when --config/--set given):\n"
                "  stage_channels, blocks_per_stage, decoder_channels, reduction,\n"
                "  scale_sizes, variant, fusion")
    p.formatter_class = argparse.RawDescriptionHelpFormatter
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="score a directory of prediction PNGs")
    p.add_argument("--pred", required=True, help="directory of prediction PNGs")
    p.add_argument("--gt", required=True, help="directory of ground-truth PNGs")
    p.add_argument("--out", required=True, help="output CSV path")
    p.epilog = "reads no config keys"
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="compare full/scale2/scale1/wo_seff variants")
    _add_common(p, all_keys)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("synth", help="generate a synthetic RGB-D dataset")
    _add_common(p, "  seed, synth_n, synth_canvas, out_dir")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ContractError, SampleLoadError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
