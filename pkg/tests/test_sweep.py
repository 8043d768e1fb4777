import json
from pathlib import Path

import pandas as pd
import pytest

from harness.config import ConfigError, load_config
from harness.sweep import calibrate_threshold, grid_points, load_grid, sweep

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

BASE = {
    "experiment": "synthetic-quadratic",
    "run": {"seeds": [0, 1], "budget": 2000},
    "quadratic": {"dim": 6, "rotation_deg": 30.0},
    "opt": {"kind": "sgd", "lr": 0.5},
}


def _write_grid(tmp_path, grid, **extra):
    (tmp_path / "base.json").write_text(json.dumps(BASE))
    path = tmp_path / "grid.json"
    path.write_text(json.dumps({"base": "base.json", "grid": grid, **extra}))
    return path


def test_grid_points_is_cartesian_product():
    points = grid_points({"ges.alpha": [0.3, 0.5], "opt.lr": [0.1, 0.2, 0.4]})
    assert len(points) == 6
    assert points[0] == {"ges.alpha": 0.3, "opt.lr": 0.1}
    assert points[-1] == {"ges.alpha": 0.5, "opt.lr": 0.4}


def test_load_grid_resolves_base_relative_to_grid_file(tmp_path):
    base, grid, budget, max_configs = load_grid(_write_grid(tmp_path, {"ges.alpha": [0.5]}, budget=100))
    assert base.get("quadratic.dim") == 6
    assert budget == 100
    assert max_configs == 64


def test_inline_base_and_default_budget(tmp_path):
    path = tmp_path / "grid.json"
    path.write_text(json.dumps({"base": BASE, "grid": {"ges.pop": [4]}}))
    _, _, budget, _ = load_grid(path)
    assert budget == 2000


@pytest.mark.parametrize("spec", [
    {"base": "base.json", "grid": {"ges.alpha": [0.5]}, "seeds": [0]},
    {"base": "base.json", "grid": {"ges.alpha": []}},
    {"base": 3, "grid": {"ges.alpha": [0.5]}},
])
def test_malformed_grid_files(tmp_path, spec):
    (tmp_path / "base.json").write_text(json.dumps(BASE))
    path = tmp_path / "grid.json"
    path.write_text(json.dumps(spec))
    with pytest.raises(ConfigError):
        load_grid(path)


def test_sweep_ranks_points_and_writes_best_config(tmp_path):
    grid = _write_grid(tmp_path, {"ges.alpha": [0.3, 0.5, 0.7]}, budget=160)
    out = tmp_path / "sweep"
    ranked, best_path = sweep(grid, out)

    assert len(ranked) == 3
    assert list(ranked["rank"]) == [1, 2, 3]
    assert ranked["median_final_best_cost"].is_monotonic_increasing
    assert (ranked["status"] == "completed").all()
    assert (ranked["n_seeds"] == 2).all()
    assert sorted(ranked["ges.alpha"]) == [0.3, 0.5, 0.7]
    on_disk = pd.read_csv(out / "ranked.csv")
    assert list(on_disk.columns[:3]) == ["rank", "config_id", "ges.alpha"]
    for config_id in range(3):
        frame = pd.read_csv(out / f"config_{config_id:03d}" / "seed_0.csv")
        assert frame["episodes"].iloc[-1] <= 160

    best = load_config(best_path)
    assert best.budget == 2000
    assert best.output_dir == out / "best"
    assert best.get("ges.alpha") == ranked["ges.alpha"].iloc[0]


def test_guided_points_beat_isotropic_search(tmp_path):
    base = {**BASE, "run": {"seeds": [0, 1, 2], "budget": 400}, "quadratic": {"dim": 20, "rotation_deg": 30.0}}
    (tmp_path / "base.json").write_text(json.dumps(base))
    grid = tmp_path / "grid.json"
    grid.write_text(json.dumps({"base": "base.json", "grid": {"ges.alpha": [0.5, 1.0]}}))
    ranked, _ = sweep(grid, tmp_path / "out")
    assert ranked["ges.alpha"].iloc[0] == 0.5


def test_oversized_grid_is_refused(tmp_path):
    grid = _write_grid(tmp_path, {"ges.alpha": [0.3, 0.5, 0.7]}, max_configs=2)
    with pytest.raises(ConfigError):
        sweep(grid, tmp_path / "out")
    assert not (tmp_path / "out").exists()


def test_invalid_point_fails_before_any_run(tmp_path):
    grid = _write_grid(tmp_path, {"ges.alpha": [0.5, 1.5]}, budget=160)
    with pytest.raises(ConfigError):
        sweep(grid, tmp_path / "out")
    assert not (tmp_path / "out" / "config_000").exists()


@pytest.mark.parametrize("name, experiment, algorithm", [
    ("sweep_pendulum_gap.json", "pendulum-gap", "guided-es"),
    ("sweep_pendulum_gap_vanilla.json", "pendulum-gap", "vanilla-es"),
    ("sweep_mass_spring.json", "mass-spring-naive", "guided-es"),
    ("sweep_mass_spring_first_order.json", "mass-spring-naive", "first-order"),
    ("sweep_quadratic.json", "synthetic-quadratic", "guided-es"),
])
def test_shipped_grids_are_valid(name, experiment, algorithm):
    base, grid, budget, max_configs = load_grid(CONFIGS / name)
    assert (base.experiment, base.algorithm) == (experiment, algorithm)
    points = grid_points(grid)
    assert 1 < len(points) <= max_configs
    assert 0 < budget <= base.budget
    for point in points:
        base.with_overrides(point)


def test_pendulum_grids_cover_the_guided_hyperparameters():
    _, grid, _, _ = load_grid(CONFIGS / "sweep_pendulum_gap.json")
    assert {"ges.alpha", "ges.sigma", "opt.lr", "ges.t_sim", "ges.pop"} <= set(grid)
    assert min(grid["ges.t_sim"]) == 0 and max(grid["ges.t_sim"]) >= 1


def _ranked(path, costs):
    path.mkdir()
    pd.DataFrame({"rank": range(1, len(costs) + 1), "median_final_best_cost": costs,
                  "min_final_best_cost": costs}).to_csv(path / "ranked.csv", index=False)
    return path


def test_calibrated_threshold_is_half_the_best_swept_cost(tmp_path):
    first = _ranked(tmp_path / "a", [-0.4, -0.1])
    second = _ranked(tmp_path / "b", [-0.9, float("nan")])
    assert calibrate_threshold([first, second]) == pytest.approx(-0.45)
    assert calibrate_threshold([first], fraction=0.25) == pytest.approx(-0.1)


def test_calibration_errors(tmp_path):
    flat = _ranked(tmp_path / "flat", [0.0, 0.3])
    with pytest.raises(ConfigError):
        calibrate_threshold([flat])
    with pytest.raises(ConfigError):
        calibrate_threshold([tmp_path / "missing"])
    with pytest.raises(ConfigError):
        calibrate_threshold([flat], fraction=1.5)


def test_sweep_reports_best_single_seed(tmp_path):
    grid = _write_grid(tmp_path, {"ges.alpha": [0.5]}, budget=160)
    ranked, _ = sweep(grid, tmp_path / "out")
    on_disk = pd.read_csv(tmp_path / "out" / "ranked.csv")
    assert on_disk["min_final_best_cost"].iloc[0] <= on_disk["median_final_best_cost"].iloc[0]
    assert ranked["min_final_best_cost"].iloc[0] > 0
