"""Command-line entry point.

    earlydet <command> --config <path> [--set key=value ...] [--seed N] [--out dir]

Commands: synth, train, calibrate, detect, evaluate, curves, check-gradients.
Exit status: 0 on success, 2 on configuration errors, 3 on missing input
artifacts. Every run writes the fully resolved config (with its hash and
seed) next to its artifacts.
"""

from __future__ import annotations

import argparse
import sys

from . import config as config_mod
from . import pipeline
from .errors import ConfigurationError, InputError, MissingArtifactError

COMMANDS = (
    "synth",
    "train",
    "calibrate",
    "detect",
    "evaluate",
    "curves",
    "check-gradients",
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="earlydet",
        description="streaming early audio-event detection pipeline",
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="JSON config file (defaults used if omitted)")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="SECTION.KEY=VALUE",
        help="override one config entry (repeatable)",
    )
    parser.add_argument("--seed", type=int, help="override training.seed")
    parser.add_argument("--out", help="override paths.out_dir")
    return parser


def run(command: str, cfg: dict) -> int:
    pipeline.write_run_record(cfg, command)
    if command == "synth":
        train_manifest, test_manifest = pipeline.cmd_synth(cfg)
        print(f"wrote {train_manifest} and {test_manifest}")
    elif command == "train":
        pipeline.cmd_train(cfg)
        print(f"wrote {config_mod.resolve_path(cfg, 'checkpoint')}")
    elif command == "calibrate":
        thresholds = pipeline.cmd_calibrate(cfg)
        betas = ", ".join(f"{b:.1f}" for b in thresholds.betas)
        print(f"wrote {config_mod.resolve_path(cfg, 'thresholds')} (betas: {betas})")
    elif command == "detect":
        path = pipeline.cmd_detect(cfg)
        print(f"wrote {path}")
    elif command == "evaluate":
        report = pipeline.cmd_evaluate(cfg)
        o = report.overall
        f1 = "n/a" if o.f1 is None else f"{o.f1:.3f}"
        er = "n/a" if o.er is None else f"{o.er:.3f}"
        print(f"overall F1={f1} ER={er}; wrote metrics.json")
    elif command == "curves":
        curves = pipeline.cmd_curves(cfg)
        print(f"wrote curves.csv and {len(curves)} SVG charts")
    elif command == "check-gradients":
        report = pipeline.cmd_check_gradients(cfg)
        print(
            f"max relative gradient error {report['max_rel_error']:.3e} "
            f"over {report['num_cases']} cases; wrote gradient_check.json"
        )
        if report["max_rel_error"] >= 1e-5:
            print("gradient check FAILED", file=sys.stderr)
            return 1
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = config_mod.load_config(args.config, args.overrides)
        if args.seed is not None:
            cfg["training"]["seed"] = args.seed
        if args.out is not None:
            cfg["paths"]["out_dir"] = args.out
        return run(args.command, cfg)
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except MissingArtifactError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
