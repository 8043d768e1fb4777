import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .pool import EvalPool
from .sampling import GesConfig

logger = logging.getLogger(__name__)


class EstimatorError(ValueError):
    """A perturbation produced an unusable loss."""

    def __init__(self, message: str, index: int):
        super().__init__(f"{message} (perturbation {index})")
        self.index = index


@dataclass
class PerturbationBatch:
    """epsilons has shape (P, n); losses_pos[i] = f(theta + eps_i), losses_neg[i] = f(theta - eps_i)."""
    epsilons: np.ndarray
    losses_pos: np.ndarray
    losses_neg: np.ndarray

    @property
    def size(self) -> int:
        return int(self.epsilons.shape[0])


def evaluate_antithetic(objective: Callable[[np.ndarray], float], theta: np.ndarray,
                        epsilons: np.ndarray, pool: Optional[EvalPool] = None) -> PerturbationBatch:
    """Evaluates f(theta + eps_i) then f(theta - eps_i) for every i, in that fixed order."""
    pool = pool or EvalPool.get_instance()
    points = []
    for eps in epsilons:
        points.append(theta + eps)
        points.append(theta - eps)
    losses = np.array(pool.map(objective, points), dtype=float)
    return PerturbationBatch(np.asarray(epsilons, dtype=float), losses[0::2], losses[1::2])


def centered_ranks(losses: np.ndarray) -> np.ndarray:
    """Ranks mapped to [-0.5, 0.5]; ties broken by position."""
    ranks = np.empty(losses.size)
    ranks[np.argsort(losses.ravel(), kind="stable")] = np.arange(losses.size)
    if losses.size > 1:
        ranks = ranks / (losses.size - 1) - 0.5
    else:
        ranks = ranks * 0.0
    return ranks.reshape(losses.shape)


def ges_gradient_estimate(batch: PerturbationBatch, cfg: GesConfig) -> np.ndarray:
    """g = beta / (2 sigma^2 P) * sum_i eps_i [f(theta + eps_i) - f(theta - eps_i)]"""
    for i in range(batch.size):
        if not (np.isfinite(batch.losses_pos[i]) and np.isfinite(batch.losses_neg[i])):
            raise EstimatorError("Non-finite loss in antithetic pair", i)
    pos, neg = batch.losses_pos, batch.losses_neg
    if cfg.fitness_shaping:
        shaped = centered_ranks(np.concatenate([pos, neg]))
        pos, neg = shaped[:batch.size], shaped[batch.size:]
    diffs = pos - neg
    # Ordered sum over perturbation index.
    total = np.zeros(batch.epsilons.shape[1])
    for i in range(batch.size):
        total += batch.epsilons[i] * diffs[i]
    return cfg.beta / (2.0 * cfg.sigma ** 2 * batch.size) * total


def vanilla_es_gradient(batch: PerturbationBatch, sigma: float, beta: float = 2.0,
                        fitness_shaping: bool = False) -> np.ndarray:
    """Isotropic antithetic estimator: the guided estimator with alpha = 1."""
    n = batch.epsilons.shape[1]
    cfg = GesConfig(n=n, alpha=1.0, sigma=sigma, beta=beta, pop=batch.size, fitness_shaping=fitness_shaping)
    return ges_gradient_estimate(batch, cfg)
