import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from data_loader import DynamicDataLoader
from .config import ConfigError
from .recorder import read_manifest

logger = logging.getLogger(__name__)

METRICS = ("cost", "best_cost")
Z_95 = 1.96
AGGREGATE_COLUMNS = ["episodes", "n_runs", "median", "p25", "p75", "mean", "ci_low", "ci_high", "resampled"]


def _grid(frame: pd.DataFrame) -> np.ndarray:
    return np.unique(frame["episodes"].to_numpy())


def common_grid(frames: Sequence[pd.DataFrame]) -> Tuple[np.ndarray, bool]:
    """
    Episode checkpoints shared by all runs.

    Identical grids are used as-is. Otherwise the grid with the fewest
    checkpoints is taken, cut at the shortest run, and the flag is True.
    """
    grids = [_grid(f) for f in frames]
    if all(np.array_equal(grids[0], g) for g in grids[1:]):
        return grids[0], False
    coarsest = min(grids, key=len)
    horizon = min(g[-1] for g in grids if len(g))
    return coarsest[coarsest <= horizon], True


def _resample(frame: pd.DataFrame, grid: np.ndarray, metric: str) -> pd.Series:
    """Value of `metric` at each checkpoint, carried forward from the last record at or before it."""
    left = pd.DataFrame({"episodes": grid.astype(frame["episodes"].dtype)})
    right = frame[["episodes", metric]].drop_duplicates("episodes", keep="last").sort_values("episodes")
    merged = pd.merge_asof(left, right, on="episodes", direction="backward")
    return merged[metric]


def aggregate_frames(frames: Sequence[pd.DataFrame], metric: str = "cost") -> pd.DataFrame:
    """
    Per-checkpoint statistics of `metric` across runs.

    Percentiles use linear interpolation; the CI is mean +- 1.96 * sd / sqrt(n)
    with the sample standard deviation.
    """
    if metric not in METRICS:
        raise ConfigError(f"expected one of {', '.join(METRICS)}, got {metric!r}", key="metric")
    if len(frames) < 2:
        raise ConfigError(f"aggregation needs at least 2 runs, got {len(frames)}")
    frames = [f for f in frames if len(f)]
    if not frames:
        return pd.DataFrame(columns=AGGREGATE_COLUMNS)

    grid, resampled = common_grid(frames)
    if resampled:
        logger.warning(f"Episode grids differ across {len(frames)} runs; resampled to {len(grid)} "
                       f"common checkpoints with carry-forward")
    values = np.column_stack([_resample(f, grid, metric).to_numpy(dtype=float) for f in frames])
    complete = ~np.isnan(values).any(axis=1)
    grid, values = grid[complete], values[complete]

    n = values.shape[1]
    mean = values.mean(axis=1)
    half_width = Z_95 * values.std(axis=1, ddof=1) / np.sqrt(n)
    return pd.DataFrame({
        "episodes": grid,
        "n_runs": n,
        "median": np.median(values, axis=1),
        "p25": np.percentile(values, 25, axis=1),
        "p75": np.percentile(values, 75, axis=1),
        "mean": mean,
        "ci_low": mean - half_width,
        "ci_high": mean + half_width,
        "resampled": resampled,
    }, columns=AGGREGATE_COLUMNS)


def episodes_to_threshold(frame: pd.DataFrame, threshold: float) -> float:
    """Episodes used when best_cost first reaches the threshold; NaN if never."""
    hits = frame.loc[frame["best_cost"] <= threshold, "episodes"]
    return float(hits.iloc[0]) if len(hits) else float("nan")


def _threshold_for(frame: pd.DataFrame, manifests: Dict[str, dict], override: Optional[float]) -> float:
    if override is not None:
        return override
    source = Path(frame.attrs.get("source", ""))
    seeds = manifests.get(str(source.parent), {}).get("seeds", {})
    seed = source.stem.replace("seed_", "")
    value = seeds.get(seed, {}).get("threshold")
    return float("nan") if value is None else float(value)


def summarize_runs(frames: Sequence[pd.DataFrame], manifests: Dict[str, dict],
                   threshold: Optional[float] = None) -> pd.DataFrame:
    rows = []
    for frame in frames:
        limit = _threshold_for(frame, manifests, threshold)
        rows.append({
            "source": frame.attrs.get("source", ""),
            "seed": int(frame["seed"].iloc[0]) if len(frame) else -1,
            "iterations": len(frame),
            "final_episodes": int(frame["episodes"].iloc[-1]) if len(frame) else 0,
            "final_best_cost": float(frame["best_cost"].iloc[-1]) if len(frame) else float("nan"),
            "threshold": limit,
            "episodes_to_threshold": episodes_to_threshold(frame, limit) if len(frame) else float("nan"),
        })
    return pd.DataFrame(rows)


def load_run_frames(run_dirs: Sequence) -> Tuple[List[pd.DataFrame], Dict[str, dict]]:
    loader = DynamicDataLoader()
    frames, manifests = [], {}
    for run_dir in run_dirs:
        frames.extend(loader.load_runs(run_dir))
        manifests[str(Path(run_dir))] = read_manifest(run_dir)
    return frames, manifests


def aggregate(run_dirs: Sequence, out, metric: str = "cost",
              threshold: Optional[float] = None) -> Tuple[pd.DataFrame, pd.DataFrame]:
    """
    Aggregates every seed CSV under `run_dirs` into `out`, plus a per-run
    summary written next to it as <out stem>_summary.csv.
    """
    frames, manifests = load_run_frames(run_dirs)
    table = aggregate_frames(frames, metric)
    summary = summarize_runs(frames, manifests, threshold)

    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    table.to_csv(out, index=False)
    summary_path = out.with_name(f"{out.stem}_summary.csv")
    summary.to_csv(summary_path, index=False)

    final = summary["final_best_cost"].dropna()
    if len(final):
        q25, q75 = np.percentile(final, [25, 75])
        logger.info(f"Final best cost over {len(final)} runs: median={np.median(final):.6g} "
                    f"IQR=[{q25:.6g}, {q75:.6g}]")
    reached = summary["episodes_to_threshold"].dropna()
    logger.info(f"{len(reached)}/{len(summary)} runs reached their threshold"
                + (f", median episodes {np.median(reached):.0f}" if len(reached) else ""))
    logger.info(f"Aggregate written to {out} and {summary_path}")
    return table, summary
