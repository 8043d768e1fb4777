import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Tuple

import numpy as np

from data_loader import DynamicDataLoader, LoaderError
from policy.mlp import MlpSpec, init_params, param_groups
from simulators.mass_spring import MassSpringSpec, ms_rollout, ms_rollout_grad
from simulators.pendulum import GapSpec, PendulumSpec, pendulum_rollout, pendulum_rollout_grad, perturb_spec
from .config import ConfigError, ExperimentConfig

logger = logging.getLogger(__name__)


@dataclass
class Problem:
    """
    Everything a runner needs for one seed.

    objective is the budgeted cost; drs returns (simulator cost, simulator
    gradient) and is free.
    """
    name: str
    n: int
    theta0: np.ndarray
    objective: Callable[[np.ndarray], float]
    drs: Callable[[np.ndarray], Tuple[float, np.ndarray]]
    layer_groups: List[Tuple[int, int]]
    threshold: float
    zero_cost: float
    info: Dict[str, object] = field(default_factory=dict)

    def drs_grad(self, theta: np.ndarray) -> np.ndarray:
        return self.drs(theta)[1]


def policy_spec(config: ExperimentConfig, input_dim: int, output_dim: int) -> MlpSpec:
    return MlpSpec(input_dim=input_dim, hidden_dims=tuple(config.get("policy.hidden")), output_dim=output_dim)


def pendulum_specs(config: ExperimentConfig, seed: int) -> Tuple[PendulumSpec, PendulumSpec]:
    """(nominal simulator, perturbed stand-in for the real system)."""
    try:
        nominal = PendulumSpec.from_dict(config.section("pendulum"))
        gap = GapSpec(**config.section("gap"))
    except (KeyError, ValueError) as e:
        raise ConfigError(str(e), key="pendulum") from e
    return nominal, perturb_spec(nominal, gap, seed)


def mass_spring_spec(config: ExperimentConfig) -> MassSpringSpec:
    values = config.section("ms")
    values.pop("displacement_target", None)
    robot_file = values.pop("robot_file", None)
    if robot_file is not None:
        try:
            robot = DynamicDataLoader().load(robot_file, source_type="json")
        except (OSError, LoaderError) as e:
            raise ConfigError(f"cannot read robot file {robot_file}: {e}", key="ms.robot_file") from e
        values = {**robot, **values}
    try:
        return MassSpringSpec.from_dict(values)
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(str(e), key="ms") from e


def _pendulum_gap(config: ExperimentConfig, seed: int) -> Problem:
    nominal, real = pendulum_specs(config, seed)
    mlp = policy_spec(config, nominal.obs_dim, 1)

    def objective(theta):
        return pendulum_rollout(real, mlp, theta).cost

    def drs(theta):
        return pendulum_rollout_grad(nominal, mlp, theta)

    zero_cost = objective(np.zeros(mlp.total_param_count))
    threshold = config.get("run.threshold")
    if threshold is None:
        threshold = config.get("run.threshold_fraction") * zero_cost
    return Problem(name="pendulum-gap", n=mlp.total_param_count, theta0=init_params(mlp, seed),
                   objective=objective, drs=drs, layer_groups=param_groups(mlp), threshold=threshold,
                   zero_cost=zero_cost, info={"real_m": real.m, "real_l": real.l, "real_b": real.b})


def _mass_spring_naive(config: ExperimentConfig, seed: int) -> Problem:
    spec = mass_spring_spec(config)
    mlp = policy_spec(config, spec.control_features, spec.n_actuated)

    def objective(theta):
        return ms_rollout(spec, mlp, theta).cost

    def drs(theta):
        return ms_rollout_grad(spec, mlp, theta)

    zero_cost = objective(np.zeros(mlp.total_param_count))
    threshold = config.get("run.threshold")
    if threshold is None:
        threshold = -config.get("ms.displacement_target")
    return Problem(name="mass-spring-naive", n=mlp.total_param_count, theta0=init_params(mlp, seed),
                   objective=objective, drs=drs, layer_groups=param_groups(mlp), threshold=threshold,
                   zero_cost=zero_cost, info={"masses": spec.n_masses, "actuated": spec.n_actuated})


def rotate_towards(grad: np.ndarray, reference: np.ndarray, angle_deg: float) -> np.ndarray:
    """grad turned by angle_deg in the plane spanned by grad and reference, norm kept."""
    g_norm = float(np.linalg.norm(grad))
    if g_norm == 0.0:
        return grad.copy()
    unit = grad / g_norm
    ortho = reference - (reference @ unit) * unit
    o_norm = float(np.linalg.norm(ortho))
    if o_norm < 1e-12:
        return grad.copy()
    phi = math.radians(angle_deg)
    return g_norm * (math.cos(phi) * unit + math.sin(phi) * ortho / o_norm)


def _synthetic_quadratic(config: ExperimentConfig, seed: int) -> Problem:
    dim = config.get("quadratic.dim")
    if dim < 2:
        raise ConfigError("must be >= 2", key="quadratic.dim")
    angle = config.get("quadratic.rotation_deg")
    rng = np.random.default_rng(seed)
    optimum = np.zeros(dim)
    start = rng.standard_normal(dim)
    theta0 = optimum + config.get("quadratic.start_distance") * start / np.linalg.norm(start)
    reference = rng.standard_normal(dim)

    def objective(theta):
        diff = theta - optimum
        return float(diff @ diff)

    def drs(theta):
        return objective(theta), rotate_towards(2.0 * (theta - optimum), reference, angle)

    threshold = config.get("run.threshold")
    return Problem(name="synthetic-quadratic", n=dim, theta0=theta0, objective=objective, drs=drs,
                   layer_groups=[(0, dim)], threshold=1e-3 if threshold is None else threshold,
                   zero_cost=objective(np.zeros(dim)), info={"rotation_deg": angle})


PROBLEM_BUILDERS = {
    "pendulum-gap": _pendulum_gap,
    "mass-spring-naive": _mass_spring_naive,
    "synthetic-quadratic": _synthetic_quadratic,
}


def build_problem(config: ExperimentConfig, seed: int) -> Problem:
    problem = PROBLEM_BUILDERS[config.experiment](config, seed)
    if config.algorithm in ("guided-es", "vanilla-es") and config.get("ges.k") > problem.n:
        raise ConfigError(f"subspace dimension exceeds the {problem.n} policy parameters", key="ges.k")
    logger.info(f"[{problem.name} seed={seed}] n={problem.n} zero-policy cost={problem.zero_cost:.6g} "
                f"threshold={problem.threshold:.6g}")
    return problem
