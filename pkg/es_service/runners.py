"""
Training loops. Every runner is a pure function of its inputs and seed:
perturbation i of iteration t draws from substream(seed, t, i), and
objective evaluations are reduced in perturbation order.
"""
import logging
import time
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from optimizers.first_order import FirstOrderOptimizer, NonFiniteGradientError
from .cma import cma_ask, cma_init, cma_tell
from .estimators import evaluate_antithetic, ges_gradient_estimate
from .pool import EvalPool
from .sampling import GesConfig, sample_perturbation, substream
from .subspace import GuidingSubspace, subspace_update

logger = logging.getLogger(__name__)

Objective = Callable[[np.ndarray], float]
GradientOracle = Callable[[np.ndarray], np.ndarray]
RecordSink = Callable[["RunRecord"], None]

# Substream index reserved for CMA-ES candidate sampling.
CMA_STREAM = 0


@dataclass(frozen=True)
class RunRecord:
    iteration: int
    episodes_used: int
    cost: float
    best_cost_so_far: float
    wall_ms: float
    seed: int
    drs_rollouts: int = 0


@dataclass
class RunResult:
    records: List[RunRecord]
    theta: np.ndarray


class RunAborted(RuntimeError):
    """A run failed mid-way; `records` holds everything logged before the failure."""

    def __init__(self, message: str, records: List[RunRecord], theta: np.ndarray):
        super().__init__(message)
        self.records = records
        self.theta = theta


@dataclass
class _Ledger:
    """Episode and DRS accounting plus record emission, shared by all runners."""
    seed: int
    budget: int
    sink: Optional[RecordSink] = None
    records: List[RunRecord] = field(default_factory=list)
    episodes: int = 0
    drs_rollouts: int = 0
    best: float = float("inf")
    theta: Optional[np.ndarray] = None
    started: float = field(default_factory=time.perf_counter)

    def affordable(self, cost: int) -> bool:
        return self.episodes + cost <= self.budget

    def log(self, iteration: int, cost: float):
        self.best = min(self.best, cost)
        record = RunRecord(iteration=iteration, episodes_used=self.episodes, cost=float(cost),
                           best_cost_so_far=self.best, wall_ms=(time.perf_counter() - self.started) * 1e3,
                           seed=self.seed, drs_rollouts=self.drs_rollouts)
        self.records.append(record)
        if self.sink is not None:
            self.sink(record)
        logger.debug(f"[seed={self.seed}] iter={iteration} episodes={self.episodes} cost={cost:.6g}")

    def run(self, body: Callable[[], None]) -> RunResult:
        try:
            body()
        except Exception as e:
            logger.error(f"[seed={self.seed}] run aborted after {len(self.records)} iterations: {e}")
            raise RunAborted(str(e), self.records, self.theta) from e
        return RunResult(self.records, self.theta)


def _es_loop(objective: Objective, surrogate: Optional[Callable[[np.ndarray], Optional[np.ndarray]]],
             theta0: np.ndarray, cfg: GesConfig, optimizer: FirstOrderOptimizer, budget: int, seed: int,
             pool: Optional[EvalPool], sink: Optional[RecordSink],
             drs_per_call: Callable[[], int] = lambda: 1, charge_monitoring: bool = True) -> RunResult:
    pool = pool or EvalPool.get_instance()
    ledger = _Ledger(seed=seed, budget=budget, sink=sink, theta=np.array(theta0, dtype=float))
    monitoring = 1 if charge_monitoring else 0
    per_iteration = 2 * cfg.pop

    def body():
        sub = GuidingSubspace(n=cfg.n, k=cfg.k)
        iteration = 0
        while ledger.affordable(per_iteration + monitoring):
            theta = ledger.theta
            if surrogate is not None:
                try:
                    guide = surrogate(theta)
                except (ArithmeticError, ValueError, RuntimeError) as e:
                    logger.warning(f"[seed={seed}] iter={iteration}: surrogate failed: {e}")
                    guide = None
                ledger.drs_rollouts += drs_per_call()
                if guide is None or not np.all(np.isfinite(guide)):
                    logger.warning(f"[seed={seed}] iter={iteration}: no usable surrogate, subspace unchanged")
                else:
                    sub = subspace_update(sub, guide)

            epsilons = np.stack([sample_perturbation(sub, cfg, substream(seed, iteration, i))
                                 for i in range(cfg.pop)])
            batch = evaluate_antithetic(objective, theta, epsilons, pool)
            ledger.episodes += per_iteration
            ledger.theta = optimizer.step(theta, ges_gradient_estimate(batch, cfg))
            cost = objective(ledger.theta)
            ledger.episodes += monitoring
            ledger.log(iteration, cost)
            iteration += 1

    return ledger.run(body)


def guided_es_run(objective: Objective, surrogate: GradientOracle, theta0: np.ndarray, cfg: GesConfig,
                  optimizer: FirstOrderOptimizer, budget: int, seed: int,
                  pool: Optional[EvalPool] = None, sink: Optional[RecordSink] = None,
                  charge_monitoring: bool = True) -> RunResult:
    """
    Guided-ES with a surrogate gradient oracle.

    Each iteration costs 2*pop objective evaluations plus one for the logged
    cost at the updated parameters (unless charge_monitoring is off); the
    surrogate is free and counted in drs_rollouts. With alpha = 1 the surrogate is never queried, which
    makes the run identical to vanilla_es_run.
    """
    logger.info(f"[seed={seed}] Guided-ES: n={cfg.n} alpha={cfg.alpha} sigma={cfg.sigma} "
                f"pop={cfg.pop} k={cfg.k} budget={budget}")
    return _es_loop(objective, surrogate if cfg.alpha < 1.0 else None, theta0, cfg, optimizer,
                    budget, seed, pool, sink, charge_monitoring=charge_monitoring)


def vanilla_es_run(objective: Objective, theta0: np.ndarray, cfg: GesConfig, optimizer: FirstOrderOptimizer,
                   budget: int, seed: int, pool: Optional[EvalPool] = None,
                   sink: Optional[RecordSink] = None, charge_monitoring: bool = True) -> RunResult:
    iso = GesConfig(n=cfg.n, alpha=1.0, sigma=cfg.sigma, beta=cfg.beta, pop=cfg.pop, k=cfg.k,
                    fitness_shaping=cfg.fitness_shaping)
    logger.info(f"[seed={seed}] Vanilla-ES: n={cfg.n} sigma={cfg.sigma} pop={cfg.pop} budget={budget}")
    return _es_loop(objective, None, theta0, iso, optimizer, budget, seed, pool, sink,
                    charge_monitoring=charge_monitoring)


def sim_descent_direction(drs_grad: GradientOracle, theta: np.ndarray,
                          make_sim_optimizer: Callable[[], FirstOrderOptimizer],
                          t_sim: int) -> Optional[np.ndarray]:
    """theta_sim - theta after t_sim optimizer steps on the simulator; None if the inner loop diverges."""
    theta_sim = np.array(theta, dtype=float)
    inner = make_sim_optimizer()
    for _ in range(t_sim):
        try:
            theta_sim = inner.step(theta_sim, drs_grad(theta_sim))
        except NonFiniteGradientError:
            return None
        if not np.all(np.isfinite(theta_sim)):
            return None
    return theta_sim - theta


def sim_guided_real_run(f_real: Objective, drs_grad: GradientOracle, theta0: np.ndarray, cfg: GesConfig,
                        opt_real: FirstOrderOptimizer, make_sim_optimizer: Callable[[], FirstOrderOptimizer],
                        t_sim: int, budget: int, seed: int, pool: Optional[EvalPool] = None,
                        sink: Optional[RecordSink] = None, charge_monitoring: bool = True) -> RunResult:
    """
    Guided-ES against f_real, guided by a descent direction found in simulation.

    Every outer iteration runs t_sim steps of a fresh simulator optimizer from
    the current parameters; the displacement is the surrogate. Simulator
    gradient calls are metered in drs_rollouts, never in episodes.
    """
    if t_sim < 1:
        raise ValueError(f"t_sim must be >= 1, got {t_sim}")
    calls = [0, 0]  # total, already reported

    def counted_grad(theta):
        calls[0] += 1
        return drs_grad(theta)

    def surrogate(theta):
        return sim_descent_direction(counted_grad, theta, make_sim_optimizer, t_sim)

    def drs_used() -> int:
        used = calls[0] - calls[1]
        calls[1] = calls[0]
        return used

    logger.info(f"[seed={seed}] Sim-guided ES: n={cfg.n} alpha={cfg.alpha} t_sim={t_sim} budget={budget}")
    return _es_loop(f_real, surrogate if cfg.alpha < 1.0 else None, theta0, cfg, opt_real,
                    budget, seed, pool, sink, drs_per_call=drs_used, charge_monitoring=charge_monitoring)


def cma_es_run(objective: Objective, theta0: np.ndarray, sigma0: float, budget: int, seed: int,
               popsize: Optional[int] = None, pool: Optional[EvalPool] = None,
               sink: Optional[RecordSink] = None, charge_monitoring: bool = True) -> RunResult:
    """CMA-ES from mean theta0; each generation costs lambda episodes, plus one for the logged mean."""
    pool = pool or EvalPool.get_instance()
    state = cma_init(theta0, sigma0, popsize)
    ledger = _Ledger(seed=seed, budget=budget, sink=sink, theta=state.mean.copy())
    monitoring = 1 if charge_monitoring else 0
    logger.info(f"[seed={seed}] CMA-ES: n={state.n} lambda={state.lam} sigma0={sigma0} budget={budget}")

    def body():
        nonlocal state
        while ledger.affordable(state.lam + monitoring):
            candidates = cma_ask(state, state.lam, substream(seed, state.generation, CMA_STREAM))
            losses = np.array(pool.map(objective, list(candidates)), dtype=float)
            ledger.episodes += state.lam
            state = cma_tell(state, candidates, losses)
            ledger.theta = state.mean.copy()
            cost = objective(ledger.theta)
            ledger.episodes += monitoring
            ledger.log(state.generation - 1, cost)

    return ledger.run(body)


def first_order_run(objective: Objective, drs_grad: GradientOracle, theta0: np.ndarray,
                    optimizer: FirstOrderOptimizer, budget: int, seed: int,
                    sink: Optional[RecordSink] = None) -> RunResult:
    """Plain descent on the simulator gradient; every step is charged one episode."""
    ledger = _Ledger(seed=seed, budget=budget, sink=sink, theta=np.array(theta0, dtype=float))
    logger.info(f"[seed={seed}] First-order ({optimizer}): budget={budget}")

    def body():
        iteration = 0
        while ledger.affordable(1):
            grad = drs_grad(ledger.theta)
            ledger.drs_rollouts += 1
            ledger.episodes += 1
            try:
                ledger.theta = optimizer.step(ledger.theta, grad)
            except NonFiniteGradientError:
                logger.warning(f"[seed={seed}] iter={iteration}: non-finite gradient, step skipped")
            ledger.log(iteration, objective(ledger.theta))
            iteration += 1

    return ledger.run(body)
