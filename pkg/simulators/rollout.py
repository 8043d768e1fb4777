from dataclasses import dataclass
from typing import Optional

import numpy as np

from policy.mlp import DimensionError, MlpSpec


class SimulationError(RuntimeError):
    """Raised when a simulator reaches an invalid state."""

    def __init__(self, message: str, step: Optional[int] = None):
        super().__init__(message if step is None else f"{message} (step {step})")
        self.step = step


@dataclass
class RolloutResult:
    """
    Outcome of one episode.

    trajectory has one row per state, t = 0..T, flattened per simulator
    (pendulum: angle, velocity; mass-spring: positions then velocities).
    """
    cost: float
    trajectory: np.ndarray
    grad: Optional[np.ndarray] = None


def require_policy(mlp: MlpSpec, input_dim: int, output_dim: int, sim: str):
    if mlp.input_dim != input_dim or mlp.output_dim != output_dim:
        raise DimensionError(
            f"[{sim}] policy must map {input_dim} -> {output_dim}, got {mlp.input_dim} -> {mlp.output_dim}")
    if mlp.output_squash != "tanh":
        raise ValueError(f"[{sim}] policy output must be tanh-squashed, got '{mlp.output_squash}'")


def check_finite(values: np.ndarray, step: int, sim: str):
    if not np.all(np.isfinite(values)):
        raise SimulationError(f"[{sim}] non-finite state encountered", step=step)
