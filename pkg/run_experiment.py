#!/usr/bin/env python3
"""
Run Experiment Script - Target-Risk Estimation Harness

This script runs one experiment step per subcommand on the shift pair
described by a JSON config, writing CSVs, checkpoints, plots and a run
manifest under the output directory.

Usage:
    python run_experiment.py gen-data --config experiments/toy2d.json --seed 1
    python run_experiment.py proxy-risk --config experiments/toy2d.json --out results/
    python run_experiment.py eval --out results/

Copyright 2026 shiftgauge Project
Licensed under the Apache License, Version 2.0
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from shiftgauge import __version__
from shiftgauge.cli import (
    bold,
    cyan,
    dim,
    disable_color,
    divider,
    format_table,
    green,
    progress_bar,
    red,
    section,
    yellow,
)
from shiftgauge.config import ExperimentConfig, load_config
from shiftgauge.error_messages import (
    CONFIG_INVALID,
    ESTIMATION_FAILED,
    FILE_FORMAT_INVALID,
    FILE_NOT_FOUND,
    INPUT_INVALID,
    METRIC_UNDEFINED,
    TRAINING_FAILED,
    UNEXPECTED_ERROR,
)
from shiftgauge.exceptions import (
    ConfigurationError,
    EstimationError,
    FormatError,
    InvalidInputError,
    MetricError,
    ShiftGaugeError,
    TrainingError,
    get_exit_code,
)
from shiftgauge.logging_config import setup_logging
from shiftgauge.services import CommandResult, ExperimentService

logger = logging.getLogger("shiftgauge")

SUBCOMMANDS = {
    "gen-data": "generate the shift pair of every seed and write it as CSV",
    "train": "train the candidate model (DIR or supervised) and write its trace",
    "proxy-risk": "estimate the candidate's target risk with check models",
    "sweep-division": "worst in-class proxy risk per division; pick the division",
    "bd-bound": "Ben-David bound estimate of the candidate's target risk",
    "conf-score": "confidence-score estimate of the candidate's target risk",
    "early-stop": "proxy risk along the candidate's training run",
    "detect-errors": "flag target points the candidate likely gets wrong",
    "eval": "mean absolute error and Pearson correlation per method",
}

_PREFIXES = [
    (ConfigurationError, CONFIG_INVALID),
    (FileNotFoundError, FILE_NOT_FOUND),
    (FormatError, FILE_FORMAT_INVALID),
    (TrainingError, TRAINING_FAILED),
    (EstimationError, ESTIMATION_FAILED),
    (MetricError, METRIC_UNDEFINED),
    (InvalidInputError, INPUT_INVALID),
]


def diagnostic(exc: BaseException) -> str:
    """
    Single-line stderr message for a failure.

    Examples:
        >>> diagnostic(ConfigurationError("Unknown config key 'model.depth'"))
        "Invalid configuration: Unknown config key 'model.depth'"
    """
    prefix = next((p for t, p in _PREFIXES if isinstance(exc, t)), UNEXPECTED_ERROR)
    return f"{prefix}: {' '.join(str(exc).split())}"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="run_experiment.py",
        description="Estimate target risk under distribution shift without target labels",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  Generate the toy shift pair for seed 1:
    python run_experiment.py gen-data --config experiments/toy2d.json --seed 1

  Train candidates, then estimate their target risk three ways:
    python run_experiment.py train --config experiments/moons.json --out results/
    python run_experiment.py proxy-risk --config experiments/moons.json --out results/
    python run_experiment.py bd-bound --config experiments/moons.json --out results/
    python run_experiment.py conf-score --config experiments/moons.json --out results/

  Score every methods report under results/:
    python run_experiment.py eval --out results/

  Sweep divisions on 4 worker processes:
    python run_experiment.py sweep-division --config experiments/toy2d.json --workers 4

Notes:
  - Without --config every setting takes its default (toy2d, 5 seeds)
  - Files are named {task}_{method}_{seed}.csv so sweeps merge by concatenation
  - Exit codes: 0 success, 1 input/config error, 2 runtime/training error
  - The full log is written to <out>/logs/shiftgauge.log
        """,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-c", "--config", metavar="PATH", help="JSON experiment config (default: all defaults)")
    common.add_argument("-s", "--seed", type=int, metavar="N", help="run only this seed (overrides model.seeds)")
    common.add_argument("-o", "--out", metavar="DIR", help="output directory (overrides output.directory)")
    common.add_argument(
        "-w", "--workers", type=int, default=1, metavar="N", help="worker processes for the division sweep (default: 1)"
    )
    common.add_argument(
        "--no-color", action="store_true", help="disable ANSI color output (also respects NO_COLOR env var)"
    )
    common.add_argument("-v", "--verbose", action="store_true", help="log INFO messages to stderr")

    subparsers = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)
    for name, help_text in SUBCOMMANDS.items():
        sub = subparsers.add_parser(name, parents=[common], help=help_text, description=help_text)
        if name == "eval":
            sub.add_argument(
                "reports", nargs="*", metavar="CSV",
                help="methods reports to score (default: every methods report under --out)",
            )
    return parser


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    config = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        config = config.with_seed(args.seed)
    if args.out:
        config = config.with_output(args.out)
    return config


def print_result(result: CommandResult) -> None:
    print(section(result.subcommand))
    print(format_table(result.header, result.rows))
    for note in result.notes:
        print(yellow(note))
    print(divider())
    print(green(f"{len(result.outputs)} file(s) written"))
    for path in result.outputs:
        print("  " + dim(str(path)))


def main(argv: Optional[List[str]] = None) -> None:
    """Main entry point for the experiment harness."""
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.no_color:
        disable_color()

    try:
        config = resolve_config(args)
        out_dir = Path(config.output.directory)
        setup_logging(out_dir, console_level=logging.INFO if args.verbose else logging.WARNING)

        def show_progress(subcommand: str, done: int, total: int) -> None:
            print(f"\r{cyan(subcommand)} {progress_bar(done, total)}", end="\n" if done == total else "", file=sys.stderr)

        service = ExperimentService(config, out_dir, workers=args.workers, progress=show_progress)
        kwargs = {"report_paths": args.reports} if args.command == "eval" else {}
        print(bold(f"{args.command}") + dim(f"  task={config.task} seeds={config.model.seeds} out={out_dir}"))
        result = service.run(args.command, **kwargs)
        print_result(result)

    except (ShiftGaugeError, FileNotFoundError) as e:
        logger.debug("command failed", exc_info=True)
        print(red(diagnostic(e)), file=sys.stderr)
        sys.exit(get_exit_code(e))
    except OSError as e:
        logger.debug("command failed", exc_info=True)
        print(red(f"{UNEXPECTED_ERROR}: {e}"), file=sys.stderr)
        sys.exit(1)
    except Exception as e:
        logger.exception("unexpected failure")
        print(red(diagnostic(e)), file=sys.stderr)
        sys.exit(2)


if __name__ == "__main__":
    main()
