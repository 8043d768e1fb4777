"""
Full-covariance (mu/mu_w, lambda)-CMA-ES.

Weighted recombination, rank-one plus rank-mu covariance update and
cumulative step-size adaptation with the usual default strategy constants.
"""
import logging
import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

logger = logging.getLogger(__name__)

MAX_CONDITION = 1e14


def default_popsize(n: int) -> int:
    return 4 + int(3 * math.log(n))


@dataclass
class CmaState:
    mean: np.ndarray
    sigma: float
    cov: np.ndarray
    path_c: np.ndarray
    path_sigma: np.ndarray
    lam: int
    mu: int
    weights: np.ndarray
    mueff: float
    cc: float
    cs: float
    c1: float
    cmu: float
    damps: float
    chi_n: float
    eigen_basis: np.ndarray
    eigen_scale: np.ndarray
    generation: int = 0
    counteval: int = 0

    @property
    def n(self) -> int:
        return int(self.mean.shape[0])


def cma_init(mean: np.ndarray, sigma: float, lam: Optional[int] = None) -> CmaState:
    mean = np.array(mean, dtype=float)
    n = mean.shape[0]
    lam = int(lam or default_popsize(n))
    if lam < 4:
        raise ValueError(f"CMA-ES population must be >= 4, got {lam}")
    if not sigma > 0:
        raise ValueError(f"CMA-ES sigma must be > 0, got {sigma}")

    # Strategy parameter setting: selection
    mu = lam // 2
    weights = math.log((lam + 1) / 2.0) - np.log(np.arange(1, mu + 1))
    weights /= weights.sum()
    mueff = 1.0 / float(np.sum(weights ** 2))

    # Strategy parameter setting: adaptation
    cc = (4 + mueff / n) / (n + 4 + 2 * mueff / n)
    cs = (mueff + 2) / (n + mueff + 5)
    c1 = 2 / ((n + 1.3) ** 2 + mueff)
    cmu = min(1 - c1, 2 * (mueff - 2 + 1 / mueff) / ((n + 2) ** 2 + mueff))
    damps = 1 + 2 * max(0.0, math.sqrt((mueff - 1) / (n + 1)) - 1) + cs
    chi_n = math.sqrt(n) * (1 - 1.0 / (4 * n) + 1.0 / (21 * n ** 2))

    return CmaState(mean=mean, sigma=float(sigma), cov=np.eye(n), path_c=np.zeros(n), path_sigma=np.zeros(n),
                    lam=lam, mu=mu, weights=weights, mueff=mueff, cc=cc, cs=cs, c1=c1, cmu=cmu,
                    damps=damps, chi_n=chi_n, eigen_basis=np.eye(n), eigen_scale=np.ones(n))


def cma_ask(state: CmaState, lam: Optional[int], rng: np.random.Generator) -> np.ndarray:
    """lam candidates mean + sigma * B D z, one per row."""
    lam = int(lam or state.lam)
    z = rng.standard_normal((lam, state.n))
    return state.mean + state.sigma * (z * state.eigen_scale) @ state.eigen_basis.T


def _decompose(cov: np.ndarray):
    cov = (cov + cov.T) / 2.0
    eigvals, basis = np.linalg.eigh(cov)
    max_eig = float(eigvals.max())
    if eigvals.min() <= 0 or max_eig / eigvals.min() > MAX_CONDITION:
        shift = max_eig / MAX_CONDITION - min(float(eigvals.min()), 0.0)
        logger.warning(f"CMA-ES covariance ill-conditioned, adding {shift:.3e} to the diagonal")
        cov = cov + shift * np.eye(cov.shape[0])
        eigvals, basis = np.linalg.eigh(cov)
    return cov, basis, np.sqrt(eigvals)


def cma_tell(state: CmaState, candidates: np.ndarray, losses: np.ndarray) -> CmaState:
    candidates = np.asarray(candidates, dtype=float)
    losses = np.asarray(losses, dtype=float)
    if not np.all(np.isfinite(losses)):
        raise ValueError("CMA-ES losses must be finite")
    if candidates.shape[0] != losses.shape[0] or candidates.shape[0] < state.mu:
        raise ValueError(f"Need at least {state.mu} candidates with one loss each")

    n = state.n
    order = np.argsort(losses, kind="stable")
    selected = candidates[order[:state.mu]]
    old_mean = state.mean
    mean = state.weights @ selected
    counteval = state.counteval + candidates.shape[0]

    y = (mean - old_mean) / state.sigma
    inv_sqrt = state.eigen_basis @ np.diag(1.0 / state.eigen_scale) @ state.eigen_basis.T
    path_sigma = (1 - state.cs) * state.path_sigma + math.sqrt(state.cs * (2 - state.cs) * state.mueff) * (inv_sqrt @ y)
    norm_ps = float(np.linalg.norm(path_sigma))
    hsig = norm_ps / math.sqrt(1 - (1 - state.cs) ** (2 * counteval / state.lam)) / state.chi_n < 1.4 + 2 / (n + 1)
    path_c = (1 - state.cc) * state.path_c + hsig * math.sqrt(state.cc * (2 - state.cc) * state.mueff) * y

    steps = (selected - old_mean) / state.sigma
    c1a = state.c1 * (1 - (1 - hsig ** 2) * state.cc * (2 - state.cc))
    rank_mu = steps.T @ (state.weights[:, None] * steps)
    cov = (1 - c1a - state.cmu) * state.cov + state.c1 * np.outer(path_c, path_c) + state.cmu * rank_mu

    sigma = state.sigma * math.exp(min(1.0, (state.cs / state.damps) * (norm_ps / state.chi_n - 1)))
    cov, basis, scale = _decompose(cov)

    return replace(state, mean=mean, sigma=sigma, cov=cov, path_c=path_c, path_sigma=path_sigma,
                   eigen_basis=basis, eigen_scale=scale, generation=state.generation + 1, counteval=counteval)
