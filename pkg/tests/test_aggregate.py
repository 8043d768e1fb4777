import math

import numpy as np
import pandas as pd
import pytest

from harness.aggregate import (
    AGGREGATE_COLUMNS,
    aggregate,
    aggregate_frames,
    common_grid,
    episodes_to_threshold,
)
from harness.config import ConfigError
from harness.recorder import write_manifest


def _frame(episodes, costs, seed=0, best=None):
    costs = np.asarray(costs, dtype=float)
    return pd.DataFrame({
        "iteration": np.arange(len(episodes)),
        "episodes": episodes,
        "cost": costs,
        "best_cost": np.minimum.accumulate(costs) if best is None else best,
        "wall_ms": 0,
        "seed": seed,
        "drs_rollouts": 0,
    })


def test_two_runs_percentiles():
    table = aggregate_frames([_frame([16], [1.0]), _frame([16], [3.0], seed=1)])
    assert list(table.columns) == AGGREGATE_COLUMNS
    row = table.iloc[0]
    assert row["median"] == 2.0
    assert row["p25"] == 1.5
    assert row["p75"] == 2.5
    assert row["n_runs"] == 2
    assert not row["resampled"]


def test_identical_runs_have_zero_width_interval():
    frames = [_frame([8, 16, 24], [3.0, 2.0, 1.0], seed=s) for s in range(4)]
    table = aggregate_frames(frames)
    np.testing.assert_array_equal(table["ci_low"], table["mean"])
    np.testing.assert_array_equal(table["ci_high"], table["mean"])


def test_interval_half_width():
    values = [1.0, 2.0, 4.0, 8.0, 16.0]
    table = aggregate_frames([_frame([10], [v], seed=i) for i, v in enumerate(values)])
    half = 1.96 * np.std(values, ddof=1) / math.sqrt(5)
    assert table["ci_high"].iloc[0] - table["mean"].iloc[0] == pytest.approx(half, rel=1e-12)
    assert table["mean"].iloc[0] - table["ci_low"].iloc[0] == pytest.approx(half, rel=1e-12)


def test_matches_numpy_on_random_runs():
    rng = np.random.default_rng(7)
    episodes = np.arange(1, 31) * 16
    values = rng.lognormal(size=(6, len(episodes)))
    table = aggregate_frames([_frame(episodes, values[i], seed=i) for i in range(6)], metric="cost")
    np.testing.assert_allclose(table["median"], np.median(values, axis=0), rtol=0, atol=1e-12)
    np.testing.assert_allclose(table["p25"], np.percentile(values, 25, axis=0), rtol=0, atol=1e-12)
    np.testing.assert_allclose(table["p75"], np.percentile(values, 75, axis=0), rtol=0, atol=1e-12)
    np.testing.assert_allclose(table["mean"], values.mean(axis=0), rtol=0, atol=1e-12)


def test_best_cost_metric():
    a = _frame([10, 20], [5.0, 7.0])
    b = _frame([10, 20], [3.0, 9.0], seed=1)
    table = aggregate_frames([a, b], metric="best_cost")
    np.testing.assert_allclose(table["median"], [4.0, 4.0])


def test_mismatched_grids_are_resampled(caplog):
    a = _frame([10, 20, 30, 40], [4.0, 3.0, 2.0, 1.0])
    b = _frame([15, 30], [8.0, 6.0], seed=1)
    grid, resampled = common_grid([a, b])
    assert resampled
    np.testing.assert_array_equal(grid, [15, 30])
    with caplog.at_level("WARNING"):
        table = aggregate_frames([a, b])
    assert "resampled" in caplog.text
    assert table["resampled"].all()
    np.testing.assert_array_equal(table["episodes"], [15, 30])
    np.testing.assert_allclose(table["median"], [6.0, 4.0])


def test_needs_two_runs_and_known_metric():
    with pytest.raises(ConfigError):
        aggregate_frames([_frame([10], [1.0])])
    with pytest.raises(ConfigError):
        aggregate_frames([_frame([10], [1.0]), _frame([10], [1.0])], metric="wall_ms")


def test_episodes_to_threshold():
    frame = _frame([10, 20, 30, 40], [5.0, 3.0, 1.0, 0.5])
    assert episodes_to_threshold(frame, 1.0) == 30
    assert episodes_to_threshold(frame, 5.0) == 10
    assert math.isnan(episodes_to_threshold(frame, 0.1))


def test_aggregate_writes_table_and_summary(tmp_path):
    dirs = []
    for name, threshold in (("guided", 2.0), ("vanilla", 0.5)):
        run_dir = tmp_path / name
        run_dir.mkdir()
        for seed in (0, 1):
            _frame([16, 32, 48], [4.0, 2.0 + seed, 1.0], seed=seed).to_csv(run_dir / f"seed_{seed}.csv", index=False)
        write_manifest(run_dir, {"seeds": {"0": {"threshold": threshold}, "1": {"threshold": threshold}}})
        dirs.append(run_dir)

    out = tmp_path / "agg" / "pendulum.csv"
    table, summary = aggregate(dirs, out)
    assert out.exists()
    assert (tmp_path / "agg" / "pendulum_summary.csv").exists()
    assert pd.read_csv(out)["n_runs"].eq(4).all()
    assert len(table) == 3
    assert list(summary["threshold"]) == [2.0, 2.0, 0.5, 0.5]
    assert list(summary["episodes_to_threshold"][:2]) == [32.0, 48.0]
    assert summary["episodes_to_threshold"][2:].isna().all()

    _, overridden = aggregate(dirs, out, threshold=4.0)
    assert (overridden["episodes_to_threshold"] == 16.0).all()
