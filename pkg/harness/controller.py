# controller.py
import logging
from typing import Callable, Dict

from data_loader import LoaderError, parse_value
from es_service.pool import EvalPool
from es_service.runners import RunAborted
from policy.mlp import DimensionError
from simulators.rollout import SimulationError
from .aggregate import aggregate
from .config import ConfigError, from_values, load_config
from .grad_check import DEFAULT_STEPS, grad_check
from .runner import run_experiment
from .sweep import calibrate_threshold, sweep

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2
EXIT_CHECK = 3


def _as_list(text):
    value = parse_value(text)
    return value if isinstance(value, list) else [value]


def run_overrides(args) -> Dict[str, object]:
    """CLI flags that override config file keys."""
    overrides = {}
    if getattr(args, "seed_list", None):
        overrides["run.seeds"] = _as_list(args.seed_list)
    if getattr(args, "out", None):
        overrides["run.output_dir"] = args.out
    if getattr(args, "budget", None) is not None:
        overrides["run.budget"] = args.budget
    return overrides


def handle_run(args) -> int:
    """
    Subcommand: run every seed of a config.
    """
    config = load_config(args.config, run_overrides(args))
    run_dir = run_experiment(config)
    print(run_dir)
    return EXIT_OK


def handle_aggregate(args) -> int:
    """
    Subcommand: aggregate run directories into a plot-ready CSV.
    """
    threshold = args.threshold
    if getattr(args, "calibrate_from", None):
        threshold = calibrate_threshold(args.calibrate_from, args.calibrate_fraction)
    aggregate(args.run_dirs, args.out, metric=args.metric, threshold=threshold)
    print(args.out)
    return EXIT_OK


def handle_grad_check(args) -> int:
    """
    Subcommand: adjoint vs central differences.
    Returns EXIT_CHECK when a smooth scenario exceeds the tolerance.
    """
    if args.config:
        config = load_config(args.config, {"experiment": args.experiment})
    else:
        config = from_values({"experiment": args.experiment})
    try:
        steps = [float(s) for s in _as_list(args.steps)] if args.steps else list(DEFAULT_STEPS)
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e), key="steps") from e
    report, ok = grad_check(config, steps=steps, n_coords=args.coords, seed=args.seed,
                            theta_source=args.theta_source)
    if args.out:
        report.to_csv(args.out, index=False)
    print(report.to_string(index=False))
    return EXIT_OK if ok else EXIT_CHECK


def handle_sweep(args) -> int:
    """
    Subcommand: hyperparameter grid sweep.
    """
    _, best_path = sweep(args.grid, args.out)
    print(best_path)
    return EXIT_OK


def dispatch(handler: Callable[[object], int], args) -> int:
    """Runs a subcommand handler and maps failures to exit codes."""
    try:
        return handler(args)
    except (ConfigError, LoaderError) as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_CONFIG
    except (RunAborted, SimulationError, DimensionError, ArithmeticError) as e:
        logger.error(f"Run failed: {e}")
        return EXIT_RUNTIME
    except OSError as e:
        logger.error(f"I/O error: {e}")
        return EXIT_RUNTIME
    finally:
        EvalPool.reset()
