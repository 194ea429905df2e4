"""
CLI
Command-line entry point: sweep, bench, gps, selftest and gui subcommands.

Exit codes: 0 success, 1 config/usage error or failed self-test,
2 solver divergence.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from core.errors import ConfigError, DivergenceError
from core.experiments import (
    ExperimentConfig,
    load_config,
    run_benchmark_alg1_vs_alg2,
    run_gps_experiments,
    run_noise_sweep,
)
from core.selftest import run_selftest

logger = logging.getLogger(__name__)


EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DIVERGED = 2


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with status 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON experiment config")
    common.add_argument("--out", help="Output directory (overrides output_dir)")
    common.add_argument("--seed", type=int, help="Single seed replacing the config's seed list")
    common.add_argument("--max-iter", type=int, dest="max_iter", help="Iteration cap per run")
    common.add_argument("--mode", choices=["alg1", "alg2", "bregman"], help="Solver mode")
    common.add_argument("-v", "--verbose", action="store_true", help="Debug logging")

    parser = _Parser(
        prog="tomodual",
        description="Primal-dual TV-Bregman reconstruction with discrepancy stopping",
    )
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.add_parser("sweep", parents=[common], help="Noise-level sweep")
    sub.add_parser("bench", parents=[common], help="Alg 1 vs Alg 2 on one problem")
    sub.add_parser("gps", parents=[common], help="GPS tomography scenes and schedules")
    sub.add_parser("selftest", parents=[common], help="Numerical invariant suite")
    sub.add_parser("gui", parents=[common], help="Launch the desktop workbench")
    return parser


def _configure_logging(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


def _experiment_config(args: argparse.Namespace) -> ExperimentConfig:
    if args.config:
        cfg = load_config(args.config)
    else:
        cfg = ExperimentConfig(problem="gps3d" if args.command == "gps" else "radon2d").validate()
    return cfg.with_overrides(out=args.out, seed=args.seed, max_iter=args.max_iter, mode=args.mode)


def _launch_gui() -> int:
    from app import TomodualApp

    TomodualApp().mainloop()
    return EXIT_OK


def cli_main(argv: Optional[List[str]] = None) -> int:
    """
    Parse arguments and run one subcommand.

    Args:
        argv: Arguments without the program name; defaults to sys.argv[1:]

    Returns:
        Process exit code
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_CONFIG

    _configure_logging(getattr(args, "verbose", False))
    command = args.command or "gui"

    try:
        if command == "gui":
            return _launch_gui()

        if command == "selftest":
            results = run_selftest(Path(args.out) if args.out else None)
            for r in results:
                print(f"{'PASS' if r.passed else 'FAIL'}  {r.check}: {r.detail}")
            failed = [r.check for r in results if not r.passed]
            return EXIT_CONFIG if failed else EXIT_OK

        cfg = _experiment_config(args)
        if command == "sweep":
            outcome = run_noise_sweep(cfg)
            print(f"Sweep summary: {outcome['summary_csv']} "
                  f"(monotone in delta: {'pass' if outcome['monotone'] else 'fail'})")
        elif command == "bench":
            outcome = run_benchmark_alg1_vs_alg2(cfg)
            print(f"Benchmark curves: {outcome['curves_csv']} "
                  f"(first to band: {outcome['first_to_band']}, "
                  f"alg2 not worse: {'pass' if outcome['alg2_not_worse'] else 'fail'})")
        else:
            outcome = run_gps_experiments(cfg)
            print(f"GPS summary: {outcome['summary_csv']}")
            for name, passed in outcome["checks"].items():
                print(f"  {name}: {passed}")

        if outcome["diverged"]:
            print(f"{outcome['diverged']} run(s) diverged", file=sys.stderr)
            return EXIT_DIVERGED
        return EXIT_OK

    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DIVERGED
