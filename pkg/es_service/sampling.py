from dataclasses import dataclass

import numpy as np

from .subspace import GuidingSubspace


@dataclass(frozen=True)
class GesConfig:
    """
    Guided-ES hyperparameters.

    alpha weighs the isotropic part of the search covariance
    Sigma = (alpha/n) I + ((1-alpha)/k) U U^T; alpha = 1 is Vanilla-ES.
    """
    n: int
    alpha: float = 0.5
    sigma: float = 0.1
    beta: float = 2.0
    pop: int = 8
    k: int = 1
    fitness_shaping: bool = False

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
        if not self.sigma > 0 or not self.beta > 0:
            raise ValueError(f"sigma and beta must be > 0, got sigma={self.sigma}, beta={self.beta}")
        if self.pop < 1 or self.k < 1 or self.n < 1:
            raise ValueError(f"pop, k and n must be >= 1, got pop={self.pop}, k={self.k}, n={self.n}")


def substream(seed: int, iteration: int, index: int) -> np.random.Generator:
    """Generator owned by perturbation `index` of `iteration` under master `seed`."""
    return np.random.default_rng(np.random.SeedSequence([int(seed) % 2 ** 64, int(iteration), int(index)]))


def sample_perturbation(sub: GuidingSubspace, cfg: GesConfig, rng: np.random.Generator) -> np.ndarray:
    """eps ~ N(0, sigma^2 Sigma), drawn without forming Sigma."""
    n = cfg.n
    k_eff = sub.k_eff
    # An empty subspace degenerates to isotropic sampling.
    alpha = cfg.alpha if k_eff > 0 else 1.0
    eps = np.sqrt(alpha / n) * rng.standard_normal(n)
    if alpha < 1.0:
        eps = eps + np.sqrt((1.0 - alpha) / k_eff) * (sub.basis @ rng.standard_normal(k_eff))
    return cfg.sigma * eps


def search_covariance(sub: GuidingSubspace, cfg: GesConfig) -> np.ndarray:
    """Dense sigma^2 * Sigma, for diagnostics and tests."""
    k_eff = sub.k_eff
    alpha = cfg.alpha if k_eff > 0 else 1.0
    cov = (alpha / cfg.n) * np.eye(cfg.n)
    if alpha < 1.0:
        cov += ((1.0 - alpha) / k_eff) * sub.basis @ sub.basis.T
    return cfg.sigma ** 2 * cov
