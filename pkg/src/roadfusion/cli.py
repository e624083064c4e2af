"""Command-line driver: attributes / masks / eval / pipeline subcommands."""

from __future__ import annotations

import argparse
import sys

from .pipeline import (
    ConfigError,
    list_frames,
    load_config,
    run_attributes,
    run_eval,
    run_masks_batch,
    run_pipeline,
)


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--jobs", type=int, default=None)
    parser.add_argument("--weights", default=None, help="w1,w2,w3,w4,w5 (sum 1)")
    parser.add_argument("--threshold", default=None, help="fusion threshold or 'auto'")
    for name in ("osm", "poses", "images", "calib", "velodyne", "gt", "output", "dynamics"):
        parser.add_argument(f"--{name}", default=None, help=f"override {name} path")


def _overrides(args: argparse.Namespace) -> dict:
    out = {}
    for key in ("seed", "jobs", "threshold", "osm", "poses", "images", "calib", "velodyne", "gt", "output", "dynamics"):
        out[key] = getattr(args, key, None)
    if getattr(args, "weights", None):
        out["weights"] = [float(v) for v in args.weights.split(",")]
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="roadfusion",
        description="OSM scene attributes and fused road masks for driving frames",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, doc in (
        ("attributes", "per-pose attribute and feature files"),
        ("masks", "per-frame road masks and the fused confidence mask"),
        ("eval", "precision/recall/F1 report against ground truth"),
        ("pipeline", "attributes, masks, and eval in sequence"),
    ):
        p = sub.add_parser(name, help=doc)
        _add_common(p)
        if name == "masks":
            p.add_argument("--frame", default=None, help="process a single frame id")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, _overrides(args))
        if args.command == "attributes":
            attr_path, feat_path = run_attributes(cfg)
            print(f"wrote {attr_path} and {feat_path}")
            return 0
        if args.command == "masks":
            frames = [args.frame] if args.frame else None
            failures = run_masks_batch(cfg, frames)
            if failures:
                for frame, err in sorted(failures.items()):
                    print(f"frame {frame} failed: {err}", file=sys.stderr)
                return 2
            return 0
        if args.command == "eval":
            results, skipped = run_eval(cfg)
            with open(f"{cfg.paths.output}/eval_report.txt") as fh:
                print(fh.read())
            return 0
        if args.command == "pipeline":
            failures = run_pipeline(cfg)
            if failures:
                for frame, err in sorted(failures.items()):
                    print(f"frame {frame} failed: {err}", file=sys.stderr)
                return 2
            return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
