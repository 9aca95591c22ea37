#!/usr/bin/env python3
"""
Experiment runner for MPS Born machine optimizer comparisons.

Verbs:
    validate  Check a config file and report every offending key
    run       Train all configured optimizers over all seeds, write traces,
              aggregates, summary.json and manifest.json
    compare   Align finished runs and rank optimizers by final NLL

Usage:
    python scripts/run_experiment.py validate --config configs/bas_7x7.yaml
    python scripts/run_experiment.py run --config configs/bas_4x4_trend.yaml \
      --out results/bas_4x4 --seeds 0,1,2,3,4 --threads 4
    python scripts/run_experiment.py compare --runs results/bas_4x4 --out results/bas_4x4

Exit codes:
    0  success
    1  configuration error
    2  runtime failure (partial artifacts are kept)
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

sys.path.insert(0, str(Path(__file__).parent))

from tnbm.errors import AlignmentError, ConfigError, TnbmError
from tnbm.experiment import (
    COMPARISON_FILE,
    ExperimentConfig,
    compare,
    load_summaries,
    parse_seed_list,
    run_experiment,
)

logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2


def _report_config_error(error: ConfigError):
    logger.error("🚨 CONFIG VALIDATION FAILED")
    for problem in error.problems:
        logger.error(f"   - {problem}")


def cmd_validate(args) -> int:
    try:
        cfg = ExperimentConfig.load(args.config)
        seeds = parse_seed_list(args.seeds) if args.seeds else None
        cfg = cfg.with_overrides(args.out, seeds)
    except ConfigError as e:
        _report_config_error(e)
        return EXIT_CONFIG
    logger.info(f"✅ Config valid: {args.config}")
    logger.info(f"   Experiment: {cfg.experiment.name}")
    logger.info(f"   Optimizers: {[spec.name for spec in cfg.optimizers]}")
    logger.info(f"   Seeds: {cfg.experiment.seeds}")
    logger.info(f"   Output: {cfg.output_dir}")
    logger.info(f"   Config hash: {cfg.config_hash}")
    return EXIT_OK


def cmd_run(args) -> int:
    try:
        cfg = ExperimentConfig.load(args.config)
        seeds = parse_seed_list(args.seeds) if args.seeds else None
        cfg = cfg.with_overrides(args.out, seeds)
    except ConfigError as e:
        _report_config_error(e)
        return EXIT_CONFIG

    try:
        result = run_experiment(cfg, threads=args.threads)
    except (TnbmError, OSError) as e:
        logger.error(f"❌ Run failed: {e}")
        return EXIT_RUNTIME

    if not result.ok:
        logger.error(f"❌ {len(result.failures)} realization(s) failed:")
        for optimizer, seed, reason in result.failures:
            logger.error(f"   {optimizer} seed {seed}: {reason}")
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_compare(args) -> int:
    summaries = []
    for run_dir in args.runs:
        try:
            loaded = load_summaries(run_dir)
        except FileNotFoundError as e:
            logger.error(f"❌ Cannot load run {run_dir}: {e}")
            return EXIT_RUNTIME
        if len(args.runs) > 1:
            for summary in loaded:
                summary.optimizer = f"{Path(run_dir).name}/{summary.optimizer}"
        summaries.extend(loaded)

    out_dir = Path(args.out) if args.out else Path(args.runs[0])
    try:
        compare(summaries, out_dir / COMPARISON_FILE)
    except AlignmentError as e:
        logger.error(f"❌ {e}")
        return EXIT_RUNTIME
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--verbose",
        action="store_true",
        help="Log per-site steps (DEBUG level)"
    )
    parser = argparse.ArgumentParser(
        description="Train and compare MPS Born machine optimizers"
    )
    subparsers = parser.add_subparsers(dest="verb", required=True)

    for verb in ("validate", "run"):
        sub = subparsers.add_parser(verb, parents=[common], help=f"{verb} an experiment config")
        sub.add_argument(
            "--config",
            type=str,
            required=True,
            help="Path to experiment YAML"
        )
        sub.add_argument(
            "--out",
            type=str,
            default=None,
            help="Output directory (default: output.dir or results/<experiment name>)"
        )
        sub.add_argument(
            "--seeds",
            type=str,
            default=None,
            help="Comma-separated seed list overriding experiment.seeds"
        )
        if verb == "run":
            sub.add_argument(
                "--threads",
                type=int,
                default=1,
                help="Worker processes for independent realizations (default: 1)"
            )

    sub = subparsers.add_parser("compare", parents=[common], help="compare finished runs")
    sub.add_argument(
        "--runs",
        type=str,
        nargs="+",
        required=True,
        help="Run directories holding summary.json"
    )
    sub.add_argument(
        "--out",
        type=str,
        default=None,
        help="Directory for comparison.csv (default: first run directory)"
    )
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.verbose:
        logging.getLogger().setLevel(logging.DEBUG)
    handlers = {
        "validate": cmd_validate,
        "run": cmd_run,
        "compare": cmd_compare,
    }
    return handlers[args.verb](args)


if __name__ == "__main__":
    sys.exit(main())
