"""
2D mass-spring locomotion robot with naive ground contact.

Masses penetrating the ground after an integration step are projected back to
ground level and stopped (sticking contact). There is no time-of-impact
subdivision, so gradients through contacts are the literal derivative of that
projection: zero through the clamped components.
"""
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Tuple

import numpy as np

from policy.mlp import DimensionError, MlpSpec, mlp_forward, mlp_forward_backward
from .rollout import RolloutResult, SimulationError, check_finite, require_policy

logger = logging.getLogger(__name__)

MIN_SPRING_LENGTH = 1e-9


@dataclass(frozen=True)
class Spring:
    i: int
    j: int
    rest_length: float
    stiffness: float
    actuated: bool = False


@dataclass(frozen=True)
class MassSpringSpec:
    masses: Tuple[Tuple[float, float, float], ...]
    springs: Tuple[Spring, ...]
    amplitude: float = 0.15
    damping_vel: float = 2.0
    gravity: float = 9.81
    ground_y: float = 0.0
    dt: float = 0.004
    horizon: int = 2000
    omegas: Tuple[float, ...] = (5.0, 10.0)
    ground_contact: bool = True
    control_features: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "masses", tuple(tuple(float(v) for v in m) for m in self.masses))
        object.__setattr__(self, "springs", tuple(self.springs))
        object.__setattr__(self, "omegas", tuple(float(w) for w in self.omegas))
        object.__setattr__(self, "horizon", int(self.horizon))
        # Time features (sin, cos per frequency) plus CoM height and CoM x-velocity.
        object.__setattr__(self, "control_features", 2 * len(self.omegas) + 2)

        n = len(self.masses)
        if n == 0:
            raise ValueError("MassSpringSpec needs at least one mass")
        if any(len(m) != 3 or m[2] <= 0 for m in self.masses):
            raise ValueError("Every mass must be (x, y, mass) with mass > 0")
        if self.dt <= 0 or self.horizon < 1:
            raise ValueError(f"dt must be > 0 and horizon >= 1, got dt={self.dt}, horizon={self.horizon}")
        if self.damping_vel < 0 or self.damping_vel * self.dt >= 1:
            raise ValueError(f"damping_vel must satisfy 0 <= damping_vel*dt < 1, got {self.damping_vel}")
        if not 0 <= self.amplitude < 1:
            raise ValueError(f"amplitude must be in [0, 1), got {self.amplitude}")

        positions = np.array([m[:2] for m in self.masses])
        for idx, s in enumerate(self.springs):
            if not (0 <= s.i < n and 0 <= s.j < n) or s.i == s.j:
                raise ValueError(f"Spring {idx} has invalid endpoints ({s.i}, {s.j})")
            if s.stiffness <= 0:
                raise ValueError(f"Spring {idx} stiffness must be > 0")
            initial = float(np.linalg.norm(positions[s.j] - positions[s.i]))
            if not math.isclose(initial, s.rest_length, rel_tol=1e-9, abs_tol=1e-12):
                raise ValueError(
                    f"Spring {idx} rest length {s.rest_length} differs from initial distance {initial}")

        # Array views used by the integrator.
        object.__setattr__(self, "_positions", positions)
        object.__setattr__(self, "_mass", np.array([m[2] for m in self.masses]))
        object.__setattr__(self, "_ends_i", np.array([s.i for s in self.springs], dtype=int))
        object.__setattr__(self, "_ends_j", np.array([s.j for s in self.springs], dtype=int))
        object.__setattr__(self, "_rest", np.array([s.rest_length for s in self.springs]))
        object.__setattr__(self, "_stiffness", np.array([s.stiffness for s in self.springs]))
        object.__setattr__(self, "_actuated", np.array([k for k, s in enumerate(self.springs) if s.actuated],
                                                      dtype=int))

    @property
    def n_masses(self) -> int:
        return len(self.masses)

    @property
    def n_actuated(self) -> int:
        return int(self._actuated.shape[0])

    @property
    def total_mass(self) -> float:
        return float(self._mass.sum())

    def initial_state(self) -> "MassSpringState":
        return MassSpringState(self._positions.copy(), np.zeros_like(self._positions))

    @classmethod
    def from_dict(cls, values: dict) -> "MassSpringSpec":
        """
        Builds a spec from `ms.*` keys (prefix optional).

        ms.masses is a list of [x, y, mass]; ms.springs a list of [i, j, stiffness, actuated]
        whose rest lengths are taken from the initial positions. Without ms.masses the
        default square robot is used and the remaining keys override its settings.
        """
        values = {(k.split(".", 1)[1] if k.startswith("ms.") else k): v for k, v in values.items()}
        renames = {"damping": "damping_vel", "contact": "ground_contact"}
        values = {renames.get(k, k): v for k, v in values.items()}
        lift_by = float(values.pop("lift", 0.0))
        values.pop("displacement_target", None)

        if "masses" in values:
            masses = [tuple(m) for m in values.pop("masses")]
            springs = [_spring_from_entry(entry, masses) for entry in values.pop("springs", [])]
            spec = cls(masses=tuple(masses), springs=tuple(springs), **values)
        else:
            if "springs" in values:
                raise KeyError("ms.springs given without ms.masses")
            spec = replace(square_robot(), **values) if values else square_robot()
        return lift(spec, lift_by) if lift_by else spec


def _spring_from_entry(entry, masses) -> Spring:
    if isinstance(entry, dict):
        i, j = int(entry["i"]), int(entry["j"])
        stiffness, actuated = float(entry["stiffness"]), bool(entry.get("actuated", False))
    else:
        i, j, stiffness = int(entry[0]), int(entry[1]), float(entry[2])
        actuated = bool(entry[3]) if len(entry) > 3 else False
    if not (0 <= i < len(masses) and 0 <= j < len(masses)):
        raise ValueError(f"Spring endpoints ({i}, {j}) out of range")
    rest = math.hypot(masses[j][0] - masses[i][0], masses[j][1] - masses[i][1])
    return Spring(i, j, rest, stiffness, actuated)


@dataclass
class MassSpringState:
    positions: np.ndarray
    velocities: np.ndarray


def square_robot(size: float = 0.1, mass: float = 0.1, stiffness: float = 500.0, **kwargs) -> MassSpringSpec:
    """Four masses on a square resting on the ground, edges actuated, diagonals passive."""
    masses = ((0.0, 0.0, mass), (size, 0.0, mass), (size, size, mass), (0.0, size, mass))
    edges = [(0, 1), (1, 2), (2, 3), (3, 0)]
    diagonals = [(0, 2), (1, 3)]
    springs = [Spring(i, j, size, stiffness, True) for i, j in edges]
    springs += [Spring(i, j, size * math.sqrt(2.0), stiffness, False) for i, j in diagonals]
    return MassSpringSpec(masses=masses, springs=tuple(springs), **kwargs)


def lift(spec: MassSpringSpec, height: float) -> MassSpringSpec:
    """Same robot with every mass raised by `height`."""
    masses = tuple((x, y + height, m) for x, y, m in spec.masses)
    return replace(spec, masses=masses)


def com(positions: np.ndarray, spec: MassSpringSpec) -> np.ndarray:
    return spec._mass @ positions / spec.total_mass


def _rest_lengths(actuation: np.ndarray, spec: MassSpringSpec) -> np.ndarray:
    actuation = np.asarray(actuation, dtype=float)
    if actuation.shape != (spec.n_actuated,):
        raise DimensionError(f"Expected {spec.n_actuated} actuation values, got shape {actuation.shape}")
    multiplier = np.ones(len(spec.springs))
    multiplier[spec._actuated] = actuation
    return spec._rest * multiplier


def _spring_geometry(positions: np.ndarray, spec: MassSpringSpec):
    d = positions[spec._ends_j] - positions[spec._ends_i]
    length = np.sqrt(np.sum(d * d, axis=1))
    if np.any(length < MIN_SPRING_LENGTH):
        bad = int(np.argmax(length < MIN_SPRING_LENGTH))
        raise SimulationError(f"[mass-spring] spring {bad} has coincident endpoints")
    return d, length, d / length[:, None]


def spring_forces(positions: np.ndarray, actuation: np.ndarray, spec: MassSpringSpec) -> np.ndarray:
    """Per-mass spring forces; mass i is pulled towards j by k*(|d| - l_rest) along d = x_j - x_i."""
    rest = _rest_lengths(actuation, spec)
    _, length, unit = _spring_geometry(positions, spec)
    tension = (spec._stiffness * (length - rest))[:, None] * unit
    forces = np.zeros_like(positions)
    np.add.at(forces, spec._ends_i, tension)
    np.add.at(forces, spec._ends_j, -tension)
    return forces


def _spring_forces_vjp(positions, actuation, force_adj, spec: MassSpringSpec):
    """Adjoints of positions and actuation given the adjoint of spring_forces' output."""
    rest = _rest_lengths(actuation, spec)
    _, length, unit = _spring_geometry(positions, spec)
    k = spec._stiffness
    tension_adj = force_adj[spec._ends_i] - force_adj[spec._ends_j]
    along = np.sum(unit * tension_adj, axis=1)
    ratio = (length - rest) / length
    d_adj = k[:, None] * (along[:, None] * unit + ratio[:, None] * (tension_adj - along[:, None] * unit))
    pos_adj = np.zeros_like(positions)
    np.add.at(pos_adj, spec._ends_j, d_adj)
    np.add.at(pos_adj, spec._ends_i, -d_adj)
    rest_adj = -k * along
    act_adj = (rest_adj * spec._rest)[spec._actuated]
    return pos_adj, act_adj


def _features(t: int, positions: np.ndarray, velocities: np.ndarray, spec: MassSpringSpec) -> np.ndarray:
    tau = t * spec.dt
    periodic = []
    for omega in spec.omegas:
        periodic += [math.sin(omega * tau), math.cos(omega * tau)]
    centre = com(positions, spec)
    centre_vx = float(spec._mass @ velocities[:, 0]) / spec.total_mass
    return np.array(periodic + [centre[1] - spec.ground_y, centre_vx])


def ms_controls(t: int, state: MassSpringState, mlp: MlpSpec, params: np.ndarray,
                spec: MassSpringSpec) -> np.ndarray:
    """Rest-length multipliers 1 + a*tanh_output, one per actuated spring."""
    require_policy(mlp, spec.control_features, spec.n_actuated, "mass-spring")
    features = _features(t, state.positions, state.velocities, spec)
    return 1.0 + spec.amplitude * mlp_forward(mlp, params, features)


def _advance(positions, velocities, actuation, spec: MassSpringSpec):
    mass = spec._mass[:, None]
    forces = spring_forces(positions, actuation, spec)
    forces[:, 1] -= spec._mass * spec.gravity
    velocities = (velocities + spec.dt * forces / mass) * (1.0 - spec.damping_vel * spec.dt)
    positions = positions + spec.dt * velocities
    if spec.ground_contact:
        contact = positions[:, 1] < spec.ground_y
        if contact.any():
            positions[contact, 1] = spec.ground_y
            velocities[contact] = 0.0
    else:
        contact = np.zeros(len(positions), dtype=bool)
    return positions, velocities, contact


def ms_step(state: MassSpringState, actuation: np.ndarray, spec: MassSpringSpec) -> MassSpringState:
    positions, velocities, _ = _advance(
        np.asarray(state.positions, dtype=float), np.asarray(state.velocities, dtype=float), actuation, spec)
    return MassSpringState(positions, velocities)


def _simulate(spec: MassSpringSpec, mlp: MlpSpec, params: np.ndarray):
    require_policy(mlp, spec.control_features, spec.n_actuated, "mass-spring")
    params = np.asarray(params, dtype=float)
    horizon, n = spec.horizon, spec.n_masses
    positions = np.empty((horizon + 1, n, 2))
    velocities = np.empty((horizon + 1, n, 2))
    features = np.empty((horizon, spec.control_features))
    actuation = np.empty((horizon, spec.n_actuated))
    contacts = np.zeros((horizon, n), dtype=bool)

    start = spec.initial_state()
    positions[0], velocities[0] = start.positions, start.velocities
    for t in range(horizon):
        features[t] = _features(t, positions[t], velocities[t], spec)
        actuation[t] = 1.0 + spec.amplitude * mlp_forward(mlp, params, features[t])
        positions[t + 1], velocities[t + 1], contacts[t] = _advance(
            positions[t], velocities[t], actuation[t], spec)
        check_finite(velocities[t + 1], t + 1, "mass-spring")

    cost = -(float(com(positions[horizon], spec)[0]) - float(com(positions[0], spec)[0]))
    return positions, velocities, features, actuation, contacts, cost


def ms_rollout(spec: MassSpringSpec, mlp: MlpSpec, params: np.ndarray) -> RolloutResult:
    positions, velocities, _, _, _, cost = _simulate(spec, mlp, params)
    horizon = spec.horizon
    trajectory = np.concatenate(
        [positions.reshape(horizon + 1, -1), velocities.reshape(horizon + 1, -1)], axis=1)
    return RolloutResult(cost=cost, trajectory=trajectory)


def ms_rollout_grad(spec: MassSpringSpec, mlp: MlpSpec, params: np.ndarray) -> Tuple[float, np.ndarray]:
    """Cost and reverse-mode gradient of the naive dynamics as implemented."""
    params = np.asarray(params, dtype=float)
    positions, velocities, features, actuation, contacts, cost = _simulate(spec, mlp, params)
    dt = spec.dt
    keep = 1.0 - spec.damping_vel * dt
    weights = spec._mass / spec.total_mass
    height_idx, vx_idx = spec.control_features - 2, spec.control_features - 1

    # cost = -(com_x(T) - com_x(0)); the initial state is fixed.
    pos_adj = np.zeros_like(positions[0])
    pos_adj[:, 0] = -weights
    vel_adj = np.zeros_like(velocities[0])
    grad = np.zeros_like(params)

    for t in range(spec.horizon - 1, -1, -1):
        contact = contacts[t]
        # Projection: clamped components pass no adjoint.
        free_pos_adj = pos_adj.copy()
        free_pos_adj[contact, 1] = 0.0
        new_vel_adj = vel_adj.copy()
        new_vel_adj[contact] = 0.0

        # x' = x + dt * v'
        next_pos_adj = free_pos_adj
        new_vel_adj = new_vel_adj + dt * free_pos_adj
        # v' = (v + dt * f / m) * keep
        pre_damp_adj = keep * new_vel_adj
        vel_adj = pre_damp_adj.copy()
        force_adj = dt * pre_damp_adj / spec._mass[:, None]
        spring_pos_adj, act_adj = _spring_forces_vjp(positions[t], actuation[t], force_adj, spec)
        pos_adj = next_pos_adj + spring_pos_adj

        _, param_grad, feature_adj = mlp_forward_backward(
            mlp, params, features[t], spec.amplitude * act_adj)
        grad += param_grad
        pos_adj[:, 1] += feature_adj[height_idx] * weights
        vel_adj[:, 0] += feature_adj[vx_idx] * weights

    return cost, grad
