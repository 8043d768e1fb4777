import argparse
import logging
import os
import sys

from harness.aggregate import METRICS
from harness.config import EXPERIMENTS, describe_keys
from harness.controller import dispatch, handle_aggregate, handle_grad_check, handle_run, handle_sweep
from harness.grad_check import THETA_SOURCES

logging.basicConfig(level=os.getenv("LOG_LEVEL", "INFO").upper(),
                    format='%(asctime)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="main.py",
        description="Guided evolutionary strategies with differentiable-simulator surrogate gradients.",
        epilog="exit codes: 0 ok, 1 config error, 2 runtime failure, 3 check failure\n"
               "environment: THREADS (evaluation threads), LOG_LEVEL",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run every seed of an experiment config",
                         epilog="config keys:\n" + describe_keys(),
                         formatter_class=argparse.RawDescriptionHelpFormatter)
    run.add_argument("--config", required=True, help="key=value (.cfg) or JSON config file")
    run.add_argument("--seed-list", help="comma-separated seeds, overrides run.seeds")
    run.add_argument("--out", help="output directory, overrides run.output_dir")
    run.add_argument("--budget", type=int, help="episode budget per seed, overrides run.budget")
    run.set_defaults(handler=handle_run)

    agg = sub.add_parser("aggregate", help="aggregate run directories into a plot-ready CSV")
    agg.add_argument("run_dirs", nargs="+", help="directories holding seed_<seed>.csv files")
    agg.add_argument("--out", required=True, help="aggregate CSV path")
    agg.add_argument("--metric", choices=METRICS, default="cost")
    target = agg.add_mutually_exclusive_group()
    target.add_argument("--threshold", type=float, help="cost threshold, overrides the manifest value")
    target.add_argument("--calibrate-from", nargs="+", metavar="SWEEP_DIR",
                        help="sweep output directories; threshold = fraction of their best final cost")
    agg.add_argument("--calibrate-fraction", type=float, default=0.5)
    agg.set_defaults(handler=handle_aggregate)

    check = sub.add_parser("grad-check", help="compare adjoint gradients with finite differences")
    check.add_argument("--experiment", required=True, choices=EXPERIMENTS)
    check.add_argument("--config", help="optional config file with simulator/policy overrides")
    check.add_argument("--steps", help="comma-separated step sizes (default 1e-4,1e-5,1e-6)")
    check.add_argument("--coords", type=int, default=8, help="sampled coordinates per scenario")
    check.add_argument("--seed", type=int, default=0)
    check.add_argument("--theta-source", choices=THETA_SOURCES, default="init")
    check.add_argument("--out", help="optional report CSV path")
    check.set_defaults(handler=handle_grad_check)

    sweep = sub.add_parser("sweep", help="hyperparameter grid sweep")
    sweep.add_argument("--grid", required=True, help="sweep grid JSON file")
    sweep.add_argument("--out", required=True, help="output directory")
    sweep.set_defaults(handler=handle_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.verbose:
        logging.getLogger().setLevel(logging.DEBUG)
    return dispatch(args.handler, args)


if __name__ == "__main__":
    sys.exit(main())
