import itertools
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Tuple

import numpy as np
import pandas as pd

from data_loader import DynamicDataLoader, LoaderError, flatten_keys
from es_service.runners import RunAborted
from .config import ExperimentConfig, ConfigError, from_values, load_config
from .recorder import seed_csv_path
from .runner import run_experiment

logger = logging.getLogger(__name__)

DEFAULT_MAX_CONFIGS = 64
GRID_KEYS = {"base", "grid", "budget", "max_configs"}


def load_grid(path) -> Tuple[ExperimentConfig, Dict[str, List[Any]], int, int]:
    """
    Reads a sweep grid file:
    {"base": <config path or object>, "grid": {key: [values]}, "budget": int, "max_configs": int}.

    A relative base path is resolved against the grid file's directory.
    """
    path = Path(path)
    try:
        spec = DynamicDataLoader().load(path, source_type="json", flatten=False)
    except FileNotFoundError as e:
        raise ConfigError(f"grid file not found: {path}") from e
    except LoaderError as e:
        raise ConfigError(str(e), line=e.line) from e
    if not isinstance(spec, dict):
        raise ConfigError("grid file must hold a JSON object")
    unknown = set(spec) - GRID_KEYS
    if unknown:
        raise ConfigError(f"unknown grid file keys: {sorted(unknown)}")

    base = spec.get("base")
    if isinstance(base, str):
        base_path = Path(base) if Path(base).is_absolute() else path.parent / base
        base_config = load_config(base_path)
    elif isinstance(base, dict):
        base_config = from_values(flatten_keys(base), source=str(path))
    else:
        raise ConfigError("must be a config path or object", key="base")

    grid = spec.get("grid") or {}
    if not isinstance(grid, dict) or any(not isinstance(v, list) or not v for v in grid.values()):
        raise ConfigError("must map keys to non-empty lists of values", key="grid")
    budget = spec.get("budget", base_config.budget)
    max_configs = spec.get("max_configs", DEFAULT_MAX_CONFIGS)
    return base_config, grid, int(budget), int(max_configs)


def grid_points(grid: Dict[str, List[Any]]) -> List[Dict[str, Any]]:
    keys = list(grid)
    return [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]


def _final_best_costs(run_dir: Path, seeds: List[int]) -> List[float]:
    finals = []
    for seed in seeds:
        path = seed_csv_path(run_dir, seed)
        frame = pd.read_csv(path) if path.exists() else pd.DataFrame()
        finals.append(float(frame["best_cost"].iloc[-1]) if len(frame) else float("nan"))
    return finals


def sweep(grid_file, out) -> Tuple[pd.DataFrame, Path]:
    """
    Runs every point of the grid at the reduced budget and ranks the points by
    median final best_cost across seeds.

    Writes ranked.csv and best_config.json (budget restored to the base value)
    into `out`. Refuses grids larger than max_configs.
    """
    base, grid, budget, max_configs = load_grid(grid_file)
    points = grid_points(grid)
    if len(points) > max_configs:
        raise ConfigError(f"grid has {len(points)} configurations, more than max_configs={max_configs}",
                          key="grid")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    logger.info(f"[sweep] {len(points)} configuration(s) of {base.experiment}/{base.algorithm} "
                f"at budget {budget}")

    # Every point is validated before the first run starts.
    configs = [
        base.with_overrides({**point, "run.budget": budget, "run.output_dir": str(out / f"config_{idx:03d}")})
        for idx, point in enumerate(points)
    ]
    rows = []
    for idx, (point, config) in enumerate(zip(points, configs)):
        run_dir = config.output_dir
        status = "completed"
        try:
            run_experiment(config)
        except RunAborted as e:
            logger.warning(f"[sweep config_{idx:03d}] failed: {e}")
            status = "failed"
        finals = np.array(_final_best_costs(run_dir, config.seeds))
        valid = finals[~np.isnan(finals)]
        rows.append({
            "config_id": idx,
            **{key: json.dumps(value) if isinstance(value, (list, dict)) else value for key, value in point.items()},
            "median_final_best_cost": float(np.median(valid)) if len(valid) else float("nan"),
            "mean_final_best_cost": float(np.mean(valid)) if len(valid) else float("nan"),
            "min_final_best_cost": float(np.min(valid)) if len(valid) else float("nan"),
            "n_seeds": len(valid),
            "status": status,
            "run_dir": str(run_dir),
        })

    ranked = pd.DataFrame(rows).sort_values(["median_final_best_cost", "config_id"], na_position="last",
                                            kind="mergesort").reset_index(drop=True)
    ranked.insert(0, "rank", np.arange(1, len(ranked) + 1))
    ranked.to_csv(out / "ranked.csv", index=False)

    best_point = points[int(ranked["config_id"].iloc[0])]
    best = base.with_overrides({**best_point, "run.output_dir": str(out / "best")})
    best_path = out / "best_config.json"
    with open(best_path, "w", encoding="utf-8") as f:
        json.dump({k: v for k, v in best.values.items() if v is not None}, f, indent=2, sort_keys=True)
    logger.info(f"[sweep] best configuration {best_point} written to {best_path}")
    return ranked, best_path


def calibrate_threshold(sweep_dirs, fraction: float = 0.5) -> float:
    """
    Threshold at `fraction` of the best cost any sweep reached.

    Meant for objectives where lower-than-zero is progress, such as negative
    displacement: the best single-seed final cost over every ranked.csv is
    scaled by fraction.
    """
    if not 0.0 < fraction <= 1.0:
        raise ConfigError(f"must be in (0, 1], got {fraction}", key="calibrate_fraction")
    best = float("inf")
    for sweep_dir in sweep_dirs:
        path = Path(sweep_dir) / "ranked.csv"
        if not path.exists():
            raise ConfigError(f"no ranked.csv in {sweep_dir}")
        ranked = DynamicDataLoader().load(path, source_type="csv")
        if "min_final_best_cost" not in ranked:
            raise ConfigError(f"{path} has no min_final_best_cost column")
        best = min(best, float(ranked["min_final_best_cost"].min()))
    if not best < 0.0:
        raise ConfigError(f"best swept cost {best:.6g} is not below zero, nothing to calibrate against")
    threshold = fraction * best
    logger.info(f"[sweep] best swept cost {best:.6g}, calibrated threshold {threshold:.6g}")
    return threshold
