import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

from data_loader import DynamicDataLoader, LoaderError
from es_service.sampling import GesConfig
from optimizers.first_order import OPTIMIZER_KINDS, FirstOrderOptimizer

logger = logging.getLogger(__name__)

EXPERIMENTS = ("pendulum-gap", "mass-spring-naive", "synthetic-quadratic")
ALGORITHMS = ("guided-es", "vanilla-es", "cma-es", "first-order")


class ConfigError(ValueError):
    def __init__(self, message: str, key: Optional[str] = None, line: Optional[int] = None):
        where = ""
        if key is not None:
            where = f"key '{key}'" + (f" (line {line})" if line is not None else "") + ": "
        super().__init__(f"{where}{message}")
        self.key = key
        self.line = line


def _to_bool(value):
    if isinstance(value, bool):
        return value
    if isinstance(value, str) and value.lower() in ("true", "yes", "1", "false", "no", "0"):
        return value.lower() in ("true", "yes", "1")
    raise ValueError(f"expected a boolean, got {value!r}")


def _to_int(value):
    if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
        raise ValueError(f"expected an integer, got {value!r}")
    return int(value)


def _list_of(convert):
    def parse(value):
        if not isinstance(value, (list, tuple)):
            value = [value]
        return [convert(v) for v in value]
    return parse


def _any(value):
    return value


def _choice(options):
    def parse(value):
        if value not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {value!r}")
        return value
    return parse


@dataclass(frozen=True)
class ConfigKey:
    parse: Callable[[Any], Any]
    default: Any
    help: str


# Simulator keys default to None: "use the simulator's own default".
CONFIG_KEYS: Dict[str, ConfigKey] = {
    "experiment": ConfigKey(_choice(EXPERIMENTS), None, f"one of {', '.join(EXPERIMENTS)} (required)"),
    "algorithm": ConfigKey(_choice(ALGORITHMS), "guided-es", f"one of {', '.join(ALGORITHMS)}"),
    "run.seeds": ConfigKey(_list_of(_to_int), [0, 1, 2, 3, 4], "distinct non-negative seeds, one run each"),
    "run.budget": ConfigKey(_to_int, 2000, "objective evaluations (episodes) per seed"),
    "run.output_dir": ConfigKey(str, "runs/experiment", "directory receiving seed_<seed>.csv and manifest.json"),
    "run.record_wall_time": ConfigKey(_to_bool, False, "write measured wall_ms (makes CSVs non-reproducible)"),
    "run.charge_monitoring": ConfigKey(_to_bool, True, "charge the per-iteration cost evaluation as one episode"),
    "run.threshold": ConfigKey(float, None, "absolute cost threshold for episodes-to-threshold"),
    "run.threshold_fraction": ConfigKey(float, 0.2, "pendulum threshold as a fraction of the zero-policy cost"),
    "policy.hidden": ConfigKey(_list_of(_to_int), [16], "hidden layer widths of the tanh MLP policy"),
    "ges.alpha": ConfigKey(float, 0.5, "isotropic share of the search covariance, 1 = Vanilla-ES"),
    "ges.sigma": ConfigKey(float, 0.1, "perturbation scale"),
    "ges.beta": ConfigKey(float, 2.0, "gradient estimate scale"),
    "ges.pop": ConfigKey(_to_int, 8, "antithetic pairs per iteration"),
    "ges.k": ConfigKey(_to_int, 1, "surrogate gradients kept in the guiding subspace"),
    "ges.t_sim": ConfigKey(_to_int, 0, "simulator steps per surrogate (0 = raw DRS gradient)"),
    "ges.fitness_shaping": ConfigKey(_to_bool, False, "use centered ranks instead of raw losses"),
    "opt.kind": ConfigKey(_choice(OPTIMIZER_KINDS), "fromage", "outer optimizer"),
    "opt.lr": ConfigKey(float, 0.01, "outer learning rate"),
    "opt.normalize_grad": ConfigKey(_to_bool, False, "normalize gradients before sgd/adam steps"),
    "opt.fromage_mode": ConfigKey(_choice(("layer", "global")), "layer", "fromage norm per layer or global"),
    "opt_sim.kind": ConfigKey(_choice(OPTIMIZER_KINDS), "fromage", "simulator optimizer (ges.t_sim >= 1)"),
    "opt_sim.lr": ConfigKey(float, 0.01, "simulator learning rate"),
    "opt_sim.normalize_grad": ConfigKey(_to_bool, False, "normalize simulator gradients for sgd/adam"),
    "cma.sigma0": ConfigKey(float, 0.1, "initial CMA-ES step size"),
    "cma.popsize": ConfigKey(_to_int, None, "CMA-ES lambda (default 4 + 3 ln n)"),
    "gap.mass": ConfigKey(float, 1.15, "real/nominal pendulum mass ratio"),
    "gap.length": ConfigKey(float, 1.0, "real/nominal pendulum length ratio"),
    "gap.damping": ConfigKey(float, 2.0, "real/nominal pendulum damping ratio"),
    "gap.jitter": ConfigKey(float, 0.0, "per-seed relative jitter of the gap ratios"),
    "pendulum.m": ConfigKey(float, None, "mass [kg]"),
    "pendulum.l": ConfigKey(float, None, "length [m]"),
    "pendulum.j": ConfigKey(float, None, "inertia [kg m^2]"),
    "pendulum.g": ConfigKey(float, None, "gravity [m/s^2]"),
    "pendulum.b": ConfigKey(float, None, "damping [N m s/rad]"),
    "pendulum.u_max": ConfigKey(float, None, "torque limit [N m]"),
    "pendulum.dt": ConfigKey(float, None, "timestep [s]"),
    "pendulum.horizon": ConfigKey(_to_int, None, "steps per episode"),
    "pendulum.obs_history": ConfigKey(_to_int, None, "observed (angle, velocity) pairs"),
    "ms.robot_file": ConfigKey(str, None, "robot description file (JSON with ms.* keys)"),
    "ms.masses": ConfigKey(_any, None, "list of [x, y, mass]"),
    "ms.springs": ConfigKey(_any, None, "list of [i, j, stiffness, actuated]"),
    "ms.amplitude": ConfigKey(float, None, "actuation amplitude a"),
    "ms.damping": ConfigKey(float, None, "velocity damping [1/s]"),
    "ms.gravity": ConfigKey(float, None, "gravity [m/s^2]"),
    "ms.ground_y": ConfigKey(float, None, "ground height [m]"),
    "ms.dt": ConfigKey(float, None, "timestep [s]"),
    "ms.horizon": ConfigKey(_to_int, None, "steps per episode"),
    "ms.omegas": ConfigKey(_list_of(float), None, "controller time-feature frequencies [rad/s]"),
    "ms.contact": ConfigKey(_to_bool, None, "naive ground contact on/off"),
    "ms.lift": ConfigKey(float, None, "raise the robot by this height [m]"),
    "ms.displacement_target": ConfigKey(float, 0.15, "locomotion threshold [m]"),
    "quadratic.dim": ConfigKey(_to_int, 20, "dimension of the synthetic quadratic"),
    "quadratic.rotation_deg": ConfigKey(float, 80.0, "angle between surrogate and true gradient"),
    "quadratic.start_distance": ConfigKey(float, 1.0, "initial distance from the optimum"),
}


def describe_keys() -> str:
    """One line per key, used by --help."""
    width = max(len(k) for k in CONFIG_KEYS)
    lines = []
    for key, spec in CONFIG_KEYS.items():
        default = "" if spec.default is None else f" [default: {spec.default}]"
        lines.append(f"  {key.ljust(width)}  {spec.help}{default}")
    return "\n".join(lines)


@dataclass
class ExperimentConfig:
    """Resolved configuration: every registry key present, parsed and validated."""
    values: Dict[str, Any]
    source: Optional[str] = None

    @property
    def experiment(self) -> str:
        return self.values["experiment"]

    @property
    def algorithm(self) -> str:
        return self.values["algorithm"]

    @property
    def seeds(self) -> List[int]:
        return self.values["run.seeds"]

    @property
    def budget(self) -> int:
        return self.values["run.budget"]

    @property
    def output_dir(self) -> Path:
        return Path(self.values["run.output_dir"])

    def get(self, key: str):
        return self.values[key]

    def section(self, prefix: str) -> Dict[str, Any]:
        """Explicitly set keys under `prefix.` (None values dropped), prefix stripped."""
        start = prefix + "."
        return {k[len(start):]: v for k, v in self.values.items() if k.startswith(start) and v is not None}

    def ges_config(self, n: int) -> GesConfig:
        g = self.section("ges")
        return GesConfig(n=n, alpha=g["alpha"], sigma=g["sigma"], beta=g["beta"], pop=g["pop"], k=g["k"],
                         fitness_shaping=g["fitness_shaping"])

    def optimizer(self, n: int, layer_groups, prefix: str = "opt") -> FirstOrderOptimizer:
        o = self.section(prefix)
        groups = layer_groups if o.get("fromage_mode", "layer") == "layer" else ()
        return FirstOrderOptimizer(o["kind"], o["lr"], n, param_groups=groups,
                                   normalize_grad=o["normalize_grad"])

    def with_overrides(self, overrides: Dict[str, Any]) -> "ExperimentConfig":
        merged = dict(self.values)
        merged.update(overrides)
        return from_values(merged, source=self.source)


def from_values(raw: Dict[str, Any], source: Optional[str] = None,
                lines: Optional[Dict[str, int]] = None) -> ExperimentConfig:
    lines = lines or {}
    values: Dict[str, Any] = {}
    for key, value in raw.items():
        if key not in CONFIG_KEYS:
            raise ConfigError("unknown key", key=key, line=lines.get(key))
        try:
            values[key] = None if value is None else CONFIG_KEYS[key].parse(value)
        except (TypeError, ValueError) as e:
            raise ConfigError(str(e), key=key, line=lines.get(key)) from e
    for key, spec in CONFIG_KEYS.items():
        values.setdefault(key, spec.default)

    if values["experiment"] is None:
        raise ConfigError("missing required key", key="experiment")
    seeds = values["run.seeds"]
    if not seeds:
        raise ConfigError("at least one seed is required", key="run.seeds", line=lines.get("run.seeds"))
    if len(set(seeds)) != len(seeds) or any(s < 0 for s in seeds):
        raise ConfigError(f"seeds must be distinct and non-negative, got {seeds}", key="run.seeds",
                          line=lines.get("run.seeds"))
    if values["run.budget"] < 0:
        raise ConfigError("budget must be >= 0", key="run.budget", line=lines.get("run.budget"))
    # Range checks owned by the library types, surfaced as config errors.
    try:
        GesConfig(n=1, alpha=values["ges.alpha"], sigma=values["ges.sigma"], beta=values["ges.beta"],
                  pop=values["ges.pop"], k=1)
    except ValueError as e:
        raise ConfigError(str(e), key="ges") from e
    if values["ges.k"] < 1 or values["ges.t_sim"] < 0:
        raise ConfigError("ges.k must be >= 1 and ges.t_sim >= 0", key="ges")
    for key in ("opt.lr", "opt_sim.lr", "cma.sigma0"):
        if not values[key] > 0:
            raise ConfigError("must be > 0", key=key, line=lines.get(key))
    return ExperimentConfig(values=values, source=source)


def load_config(path, overrides: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
    """Reads a key=value or JSON config file; `overrides` (e.g. CLI flags) win over file keys."""
    loader = DynamicDataLoader()
    try:
        raw = loader.load(path)
    except FileNotFoundError as e:
        raise ConfigError(f"config file not found: {path}") from e
    except LoaderError as e:
        raise ConfigError(str(e), line=e.line) from e
    except ValueError as e:
        raise ConfigError(str(e)) from e
    raw.update(overrides or {})
    config = from_values(raw, source=str(path), lines=loader.line_numbers)
    logger.info(f"Loaded config {path}: {config.experiment}/{config.algorithm}, seeds={config.seeds}, "
                f"budget={config.budget}")
    return config
