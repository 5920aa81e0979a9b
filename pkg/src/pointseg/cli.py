"""Command-line interface.

Stages are run as subcommands against a config (file plus ``--set``
overrides); every stage writes its artifacts and a manifest entry under the
output directory and is bit-reproducible for a fixed config.

Exit codes: 0 ok, 1 usage error, 2 data/config error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import ablate as ablate_mod
from . import pipeline
from .config import Config, resolve_config
from .errors import PackingFailure, PointsegError

USAGE_ERROR = 1
DATA_ERROR = 2
NUMERIC_ERROR = 3


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key = value config file")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        metavar="KEY=VALUE",
        help="override a config key (repeatable)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pointseg",
        description="Weakly supervised nuclei detection and segmentation from partial points",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_text in [
        ("synth", "generate the synthetic dataset"),
        ("detect", "train the initial detector from partial points"),
        ("selftrain", "run self-training rounds"),
        ("labels", "generate Voronoi and cluster pseudo-labels"),
        ("segment", "train the segmentation model"),
        ("finetune", "fine-tune the segmentation model with the dense-CRF loss"),
    ]:
        p = sub.add_parser(name, help=help_text)
        _add_common(p)

    p = sub.add_parser("infer", help="run a trained model over a split")
    _add_common(p)
    p.add_argument("--split", default="test", choices=pipeline.SPLITS)
    p.add_argument("--model", default="auto", choices=["auto", "detect", "segment"])

    p = sub.add_parser("eval", help="score an inference output against ground truth")
    _add_common(p)
    p.add_argument("--split", default="test", choices=pipeline.SPLITS)

    p = sub.add_parser("ablate", help="run an ablation sweep")
    _add_common(p)
    p.add_argument("axis", choices=["strategy", "ratio", "alpha", "crf", "sensitivity", "crossdataset"])
    p.add_argument("--test-root", help="dataset root for the crossdataset axis")
    p.add_argument("--seeds", type=int, default=ablate_mod.SENSITIVITY_SEEDS, help="seed count for sensitivity")
    p.add_argument("--with-seg", action="store_true", help="also run segmentation in the sensitivity sweep")
    return parser


def _run(args: argparse.Namespace) -> dict:
    cfg: Config = resolve_config(args.config, args.overrides)
    command = args.command
    if command == "synth":
        return pipeline.stage_synth(cfg)
    if command == "detect":
        return pipeline.stage_detect(cfg)
    if command == "selftrain":
        return pipeline.stage_selftrain(cfg)
    if command == "labels":
        return pipeline.stage_labels(cfg)
    if command == "segment":
        return pipeline.stage_segment(cfg)
    if command == "finetune":
        return pipeline.stage_finetune(cfg)
    if command == "infer":
        return pipeline.stage_infer(cfg, split=args.split, which=args.model)
    if command == "eval":
        return pipeline.stage_eval(cfg, split=args.split)
    if command == "ablate":
        if args.axis == "strategy":
            return ablate_mod.ablate_strategy(cfg)
        if args.axis == "ratio":
            return ablate_mod.ablate_ratio(cfg)
        if args.axis == "alpha":
            return ablate_mod.ablate_alpha(cfg)
        if args.axis == "crf":
            return ablate_mod.ablate_crf(cfg)
        if args.axis == "sensitivity":
            return ablate_mod.ablate_sensitivity(cfg, n_seeds=args.seeds, with_segmentation=args.with_seg)
        if args.axis == "crossdataset":
            if not args.test_root:
                raise SystemExit("ablate crossdataset requires --test-root")
            return ablate_mod.ablate_crossdataset(cfg, args.test_root)
    raise SystemExit(f"unhandled command {command!r}")


def _format_summary(summary: dict) -> str:
    parts = []
    for key, value in summary.items():
        if isinstance(value, float):
            parts.append(f"{key}={value:.4g}")
        else:
            parts.append(f"{key}={value}")
    return " ".join(parts)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return USAGE_ERROR if exc.code not in (0, None) else 0
    try:
        summary = _run(args)
    except SystemExit as exc:
        print(str(exc), file=sys.stderr)
        return USAGE_ERROR
    except (PackingFailure, PointsegError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA_ERROR
    except (FloatingPointError, ZeroDivisionError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return NUMERIC_ERROR
    print(f"{args.command}: {_format_summary(summary)}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
