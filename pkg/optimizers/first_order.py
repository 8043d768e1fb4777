import logging
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Tuple

import numpy as np

from policy.mlp import DimensionError

logger = logging.getLogger(__name__)

OPTIMIZER_KINDS = ("sgd", "adam", "fromage")
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
NORM_FLOOR = 1e-12


class NonFiniteGradientError(ValueError):
    """The gradient handed to an optimizer contains NaN or Inf."""


@dataclass
class OptimizerState:
    """
    State of one update rule for a parameter vector of length n.

    param_groups are half-open ranges partitioning [0, n); Fromage normalizes
    each group separately. Adam moments are allocated lazily on the first step.
    """
    kind: str
    learning_rate: float
    n: int
    param_groups: Tuple[Tuple[int, int], ...] = ()
    normalize_grad: bool = False
    step: int = 0
    first_moment: Optional[np.ndarray] = None
    second_moment: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in OPTIMIZER_KINDS:
            raise ValueError(f"Unsupported optimizer kind: {self.kind}")
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        groups = tuple((int(a), int(b)) for a, b in self.param_groups) or ((0, self.n),)
        cursor = 0
        for start, stop in groups:
            if start != cursor or stop <= start:
                raise ValueError(f"param_groups {groups} do not partition [0, {self.n})")
            cursor = stop
        if cursor != self.n:
            raise ValueError(f"param_groups {groups} do not partition [0, {self.n})")
        self.param_groups = groups


def _normalized(grad: np.ndarray) -> np.ndarray:
    return grad / max(float(np.linalg.norm(grad)), NORM_FLOOR)


def _fromage(params: np.ndarray, grad: np.ndarray, state: OptimizerState) -> np.ndarray:
    lr = state.learning_rate
    shrink = np.sqrt(1.0 + lr * lr)
    updated = np.empty_like(params)
    for start, stop in state.param_groups:
        theta, g = params[start:stop], grad[start:stop]
        g_norm = max(float(np.linalg.norm(g)), NORM_FLOOR)
        theta_norm = float(np.linalg.norm(theta))
        if theta_norm < NORM_FLOOR:
            updated[start:stop] = theta - lr * g / g_norm
        else:
            updated[start:stop] = (theta - lr * (theta_norm / g_norm) * g) / shrink
    return updated


def opt_step(state: OptimizerState, params: np.ndarray, grad: np.ndarray) -> Tuple[np.ndarray, OptimizerState]:
    """One update; returns the new parameters and a new state (inputs untouched)."""
    params = np.asarray(params, dtype=float)
    grad = np.asarray(grad, dtype=float)
    if params.shape != (state.n,) or grad.shape != (state.n,):
        raise DimensionError(f"Expected vectors of length {state.n}, got {params.shape} and {grad.shape}")
    if not np.all(np.isfinite(grad)):
        raise NonFiniteGradientError("Gradient contains non-finite entries")

    lr = state.learning_rate
    step = state.step + 1

    if state.kind == "fromage":
        return _fromage(params, grad, state), replace(state, step=step)

    if state.normalize_grad:
        grad = _normalized(grad)

    if state.kind == "sgd":
        return params - lr * grad, replace(state, step=step)

    m = state.first_moment if state.first_moment is not None else np.zeros(state.n)
    v = state.second_moment if state.second_moment is not None else np.zeros(state.n)
    m = ADAM_BETA1 * m + (1.0 - ADAM_BETA1) * grad
    v = ADAM_BETA2 * v + (1.0 - ADAM_BETA2) * grad * grad
    m_hat = m / (1.0 - ADAM_BETA1 ** step)
    v_hat = v / (1.0 - ADAM_BETA2 ** step)
    updated = params - lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
    return updated, replace(state, step=step, first_moment=m, second_moment=v)


class FirstOrderOptimizer:
    """Single-owner wrapper exposing `step(params, grad)`."""

    def __init__(self, kind: str, learning_rate: float, n: int,
                 param_groups: Sequence[Tuple[int, int]] = (), normalize_grad: bool = False):
        self.state = OptimizerState(kind=kind, learning_rate=learning_rate, n=n,
                                    param_groups=tuple(param_groups), normalize_grad=normalize_grad)

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        params, self.state = opt_step(self.state, params, grad)
        return params

    def __repr__(self):
        s = self.state
        return f"FirstOrderOptimizer(kind={s.kind}, lr={s.learning_rate}, groups={len(s.param_groups)})"
