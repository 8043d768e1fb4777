"""
Torque-limited pendulum with an energy-tracking cost.

Angle is measured from the horizontal, hanging straight down is -pi/2, so the
potential energy is m*g*l*sin(angle). Dynamics use semi-implicit Euler.
"""
import logging
import math
from dataclasses import dataclass, fields, replace
from typing import Tuple

import numpy as np

from policy.mlp import MlpSpec, mlp_forward, mlp_forward_backward
from .rollout import RolloutResult, check_finite, require_policy

logger = logging.getLogger(__name__)

GAP_RANGE = (0.5, 2.0)


@dataclass(frozen=True)
class PendulumSpec:
    m: float = 1.0
    l: float = 0.5
    j: float = 0.25
    g: float = 9.81
    b: float = 0.05
    u_max: float = 0.35 * 1.0 * 9.81 * 0.5
    dt: float = 0.01
    horizon: int = 400
    obs_history: int = 4

    def __post_init__(self):
        for name in ("m", "l", "j", "g", "u_max", "dt"):
            if not getattr(self, name) > 0:
                raise ValueError(f"PendulumSpec.{name} must be > 0, got {getattr(self, name)}")
        if self.b < 0:
            raise ValueError(f"PendulumSpec.b must be >= 0, got {self.b}")
        if int(self.horizon) < 1 or int(self.obs_history) < 1:
            raise ValueError("PendulumSpec.horizon and obs_history must be >= 1")
        object.__setattr__(self, "horizon", int(self.horizon))
        object.__setattr__(self, "obs_history", int(self.obs_history))

    @property
    def mgl(self) -> float:
        return self.m * self.g * self.l

    @property
    def obs_dim(self) -> int:
        return 2 * self.obs_history

    @classmethod
    def from_dict(cls, values: dict) -> "PendulumSpec":
        """Builds a spec from `pendulum.*` style keys (prefix optional)."""
        known = {f.name for f in fields(cls)}
        kwargs = {}
        for key, value in values.items():
            name = key.split(".", 1)[1] if key.startswith("pendulum.") else key
            if name not in known:
                raise KeyError(f"Unknown pendulum key: {key}")
            kwargs[name] = value
        return cls(**kwargs)


@dataclass(frozen=True)
class PendulumState:
    angle: float
    velocity: float


@dataclass(frozen=True)
class GapSpec:
    """Multipliers turning the nominal simulator into the "real" one."""
    mass: float = 1.15
    length: float = 1.0
    damping: float = 2.0
    jitter: float = 0.0

    def __post_init__(self):
        lo, hi = GAP_RANGE
        for name in ("mass", "length", "damping"):
            value = getattr(self, name)
            if not lo <= value <= hi:
                raise ValueError(f"GapSpec.{name}={value} outside [{lo}, {hi}]")
        if not 0.0 <= self.jitter < 0.5:
            raise ValueError(f"GapSpec.jitter must be in [0, 0.5), got {self.jitter}")


def pendulum_energy(state: PendulumState, spec: PendulumSpec) -> float:
    return 0.5 * spec.j * state.velocity ** 2 + spec.mgl * math.sin(state.angle)


def target_energy(spec: PendulumSpec) -> float:
    # m*g*l*sin(2*pi), with sin(2*pi) taken as exactly zero
    return spec.mgl * 0.0


def pendulum_step(state: PendulumState, torque: float, spec: PendulumSpec) -> PendulumState:
    angle, velocity = _step(state.angle, state.velocity, torque, spec)
    return PendulumState(angle, velocity)


def _step(angle: float, velocity: float, torque: float, spec: PendulumSpec) -> Tuple[float, float]:
    acc = (-spec.mgl * math.cos(angle) - spec.b * velocity + torque) / spec.j
    velocity = velocity + spec.dt * acc
    return angle + spec.dt * velocity, velocity


def initial_state() -> PendulumState:
    return PendulumState(-math.pi / 2, 0.0)


def _observation(angles: np.ndarray, vels: np.ndarray, t: int, history: int) -> np.ndarray:
    """[a_t, v_t, a_{t-1}, v_{t-1}, ...], slots before the start hold the initial state."""
    obs = np.empty(2 * history)
    for k in range(history):
        s = max(t - k, 0)
        obs[2 * k] = angles[s]
        obs[2 * k + 1] = vels[s]
    return obs


def _energy_cost(angles: np.ndarray, vels: np.ndarray, spec: PendulumSpec):
    energy = 0.5 * spec.j * vels ** 2 + spec.mgl * np.sin(angles)
    residual = energy - target_energy(spec)
    return float(np.sum(residual ** 2)), residual


def _simulate(spec: PendulumSpec, mlp: MlpSpec, params: np.ndarray):
    require_policy(mlp, spec.obs_dim, 1, "pendulum")
    params = np.asarray(params, dtype=float)
    horizon = spec.horizon
    angles = np.empty(horizon + 1)
    vels = np.empty(horizon + 1)
    observations = np.empty((horizon, spec.obs_dim))
    start = initial_state()
    angles[0], vels[0] = start.angle, start.velocity

    for t in range(horizon):
        obs = _observation(angles, vels, t, spec.obs_history)
        observations[t] = obs
        torque = spec.u_max * float(mlp_forward(mlp, params, obs)[0])
        angles[t + 1], vels[t + 1] = _step(angles[t], vels[t], torque, spec)
        if not (math.isfinite(angles[t + 1]) and math.isfinite(vels[t + 1])):
            check_finite(np.array([angles[t + 1], vels[t + 1]]), t + 1, "pendulum")

    cost, residual = _energy_cost(angles, vels, spec)
    return angles, vels, observations, cost, residual


def pendulum_rollout(spec: PendulumSpec, mlp: MlpSpec, params: np.ndarray) -> RolloutResult:
    angles, vels, _, cost, _ = _simulate(spec, mlp, params)
    return RolloutResult(cost=cost, trajectory=np.column_stack([angles, vels]))


def pendulum_rollout_grad(spec: PendulumSpec, mlp: MlpSpec, params: np.ndarray) -> Tuple[float, np.ndarray]:
    """Rollout cost and its exact gradient w.r.t. params via an adjoint sweep."""
    params = np.asarray(params, dtype=float)
    angles, vels, observations, cost, residual = _simulate(spec, mlp, params)
    horizon = spec.horizon
    dt, j, mgl = spec.dt, spec.j, spec.mgl

    # Direct cost contribution to every state's adjoint.
    adj_a = 2.0 * residual * mgl * np.cos(angles)
    adj_v = 2.0 * residual * j * vels
    grad = np.zeros_like(params)

    # Every use of s_{t+1} happens at steps > t, so adj[t+1] is complete here.
    for t in range(horizon - 1, -1, -1):
        # a' = a + dt * v'
        adj_a[t] += adj_a[t + 1]
        adj_vnext = adj_v[t + 1] + dt * adj_a[t + 1]
        # v' = v + dt * (-mgl cos a - b v + u) / J
        adj_v[t] += adj_vnext * (1.0 - dt * spec.b / j)
        adj_a[t] += adj_vnext * dt * mgl * math.sin(angles[t]) / j
        adj_torque = adj_vnext * dt / j

        _, param_grad, obs_grad = mlp_forward_backward(
            mlp, params, observations[t], np.array([adj_torque * spec.u_max]))
        grad += param_grad
        for k in range(spec.obs_history):
            s = max(t - k, 0)
            adj_a[s] += obs_grad[2 * k]
            adj_v[s] += obs_grad[2 * k + 1]

    return cost, grad


def perturb_spec(spec: PendulumSpec, gap: GapSpec, seed: int) -> PendulumSpec:
    factors = np.array([gap.mass, gap.length, gap.damping])
    if gap.jitter > 0:
        rng = np.random.default_rng(int(seed) % 2 ** 64)
        factors = factors * (1.0 + rng.uniform(-gap.jitter, gap.jitter, size=3))
    perturbed = replace(spec, m=float(spec.m * factors[0]), l=float(spec.l * factors[1]),
                        b=float(spec.b * factors[2]))
    logger.debug(f"[pendulum] perturbed spec m={perturbed.m:.4f} l={perturbed.l:.4f} b={perturbed.b:.4f}")
    return perturbed
