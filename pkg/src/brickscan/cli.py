"""Command line entry point.

Each subcommand wraps one pipeline step.  Flags override config file keys,
which override BRICKSCAN_* environment variables' targets, which override
defaults.  Failures print a JSON diagnostic to stderr and exit 1; argparse
usage errors exit 2 as usual.
"""

from __future__ import annotations

import argparse
import json
import sys
from typing import List, Optional

from . import pipeline
from .config import apply_threads, make_config
from .errors import BrickscanError

_OVERRIDE_KEYS = (
    "seed", "threads", "channel", "pixel_size", "n_positives", "n_negatives",
    "crop_jitter", "d_min", "f_target", "max_stages", "max_weak",
    "feature_pool", "scale_factor", "scan_step", "min_neighbors", "group_eps",
    "rotated_pass", "iou_threshold", "sweep_neighbors",
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="brickscan",
        description="Synthetic brick walls, baked surface maps, and a "
                    "boosted-cascade brick detector.")
    parser.add_argument("--config", metavar="FILE",
                        help="flat key = value config file")
    parser.add_argument("--seed", type=int, help="root seed for the run")
    parser.add_argument("--threads", type=int,
                        help="numba worker count, 0 = all available")
    sub = parser.add_subparsers(dest="command", required=True)

    gw = sub.add_parser("gen-wall", help="generate a wall mesh with "
                                         "annotations")
    gw.add_argument("--role", choices=("train", "eval"), default="train",
                    help="which configured wall to build")
    gw.add_argument("--pattern", help="pattern name or file, overrides the "
                                      "role's configured pattern")
    gw.add_argument("--wall-seed", type=int,
                    help="explicit wall seed, overrides the role's derived "
                         "seed")
    gw.add_argument("--out", required=True, help="output directory")

    bk = sub.add_parser("bake", help="bake relief maps of a wall")
    bk.add_argument("--wall", required=True, help="gen-wall output directory")
    bk.add_argument("--out", required=True, help="output directory")

    gd = sub.add_parser("gen-dataset", help="draw training windows")
    gd.add_argument("--maps", required=True, help="baked training wall maps")
    gd.add_argument("--wall", required=True, help="training wall directory")
    gd.add_argument("--out", required=True, help="output directory")
    gd.add_argument("--channel", choices=("height", "curvature", "ao"))
    gd.add_argument("--n-positives", type=int, dest="n_positives")
    gd.add_argument("--n-negatives", type=int, dest="n_negatives")
    gd.add_argument("--crop-jitter", type=float, dest="crop_jitter")

    tr = sub.add_parser("train", help="train the cascade classifier")
    tr.add_argument("--dataset", required=True, help="dataset directory")
    tr.add_argument("--maps", required=True, help="baked training wall maps")
    tr.add_argument("--wall", required=True, help="training wall directory")
    tr.add_argument("--out", required=True, help="model file to write")
    tr.add_argument("--channel", choices=("height", "curvature", "ao"))
    tr.add_argument("--d-min", type=float, dest="d_min")
    tr.add_argument("--f-target", type=float, dest="f_target")
    tr.add_argument("--max-stages", type=int, dest="max_stages")
    tr.add_argument("--max-weak", type=int, dest="max_weak")
    tr.add_argument("--feature-pool", type=int, dest="feature_pool")
    tr.add_argument("--n-negatives", type=int, dest="n_negatives")

    dt = sub.add_parser("detect", help="scan a baked wall for bricks")
    dt.add_argument("--model", required=True, help="trained cascade file")
    dt.add_argument("--maps", required=True, help="baked wall maps to scan")
    dt.add_argument("--out", required=True, help="output directory")
    dt.add_argument("--channel", choices=("height", "curvature", "ao"))
    dt.add_argument("--scale-factor", type=float, dest="scale_factor")
    dt.add_argument("--scan-step", type=float, dest="scan_step")
    dt.add_argument("--min-neighbors", type=int, dest="min_neighbors")
    dt.add_argument("--rotated-pass", dest="rotated_pass",
                    action=argparse.BooleanOptionalAction, default=None,
                    help="also scan the image rotated 90 degrees")

    ev = sub.add_parser("evaluate", help="score detections against "
                                         "annotations")
    ev.add_argument("--detections", required=True)
    ev.add_argument("--annotations", required=True)
    ev.add_argument("--out", required=True, help="output directory")
    ev.add_argument("--iou-threshold", type=float, dest="iou_threshold")

    sw = sub.add_parser("sweep-neighbors",
                        help="regroup raw windows across grouping "
                             "thresholds")
    sw.add_argument("--windows", required=True, help="raw windows file")
    sw.add_argument("--annotations", required=True)
    sw.add_argument("--out", required=True, help="output directory")
    sw.add_argument("--sweep", dest="sweep_neighbors",
                    help="comma separated min_neighbors values")

    al = sub.add_parser("all", help="run the whole pipeline")
    al.add_argument("--out", required=True, help="output tree root")
    al.add_argument("--channel", choices=("height", "curvature", "ao"))
    al.add_argument("--n-positives", type=int, dest="n_positives")
    al.add_argument("--n-negatives", type=int, dest="n_negatives")
    al.add_argument("--max-stages", type=int, dest="max_stages")
    al.add_argument("--min-neighbors", type=int, dest="min_neighbors")
    al.add_argument("--rotated-pass", dest="rotated_pass",
                    action=argparse.BooleanOptionalAction, default=None)

    return parser


def _collect_overrides(args: argparse.Namespace) -> dict:
    out = {}
    for key in _OVERRIDE_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            out[key] = value
    return out


def _dispatch(args: argparse.Namespace, cfg) -> dict:
    if args.command == "gen-wall":
        if args.role == "train":
            pattern = cfg.train_pattern
            seed = pipeline.train_wall_seed(cfg.seed)
        else:
            pattern = cfg.eval_pattern
            seed = pipeline.eval_wall_seed(cfg.seed)
        if args.pattern is not None:
            pattern = args.pattern
        if args.wall_seed is not None:
            seed = args.wall_seed
        return pipeline.run_gen_wall(cfg, pattern, seed, args.out)
    if args.command == "bake":
        return pipeline.run_bake(cfg, args.wall, args.out)
    if args.command == "gen-dataset":
        return pipeline.run_gen_dataset(cfg, args.maps, args.wall, args.out)
    if args.command == "train":
        return pipeline.run_train(cfg, args.dataset, args.maps, args.wall,
                                  args.out)
    if args.command == "detect":
        return pipeline.run_detect(cfg, args.model, args.maps, args.out)
    if args.command == "evaluate":
        return pipeline.run_evaluate(cfg, args.detections, args.annotations,
                                     args.out)
    if args.command == "sweep-neighbors":
        return pipeline.run_sweep(cfg, args.windows, args.annotations,
                                  args.out)
    if args.command == "all":
        return pipeline.run_all(cfg, args.out)
    raise BrickscanError(f"unknown command {args.command!r}")


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = make_config(args.config, overrides=_collect_overrides(args))
        apply_threads(cfg.threads)
        summary = _dispatch(args, cfg)
    except (BrickscanError, OSError) as exc:
        diagnostic = {"error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(diagnostic, sort_keys=True), file=sys.stderr)
        return 1
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
