import numpy as np
import pytest

from es_service.pool import EvalPool
from es_service.runners import (
    RunAborted,
    cma_es_run,
    first_order_run,
    guided_es_run,
    sim_descent_direction,
    sim_guided_real_run,
    vanilla_es_run,
)
from es_service.sampling import GesConfig
from harness.experiments import rotate_towards
from optimizers.first_order import FirstOrderOptimizer
from simulators.rollout import SimulationError


def quadratic(theta):
    return float(theta @ theta)


def exact_grad(theta):
    return 2.0 * theta


def _theta0(n=20, seed=0):
    start = np.random.default_rng(seed).standard_normal(n)
    return start / np.linalg.norm(start)


def _cfg(n=20, alpha=0.5, pop=8):
    return GesConfig(n=n, alpha=alpha, sigma=0.1, beta=2.0, pop=pop, k=1)


def _sgd(n=20, lr=0.5):
    return FirstOrderOptimizer("sgd", lr, n)


def test_budget_zero_is_a_no_op():
    theta0 = _theta0()
    for result in (
        guided_es_run(quadratic, exact_grad, theta0, _cfg(), _sgd(), 0, seed=0),
        vanilla_es_run(quadratic, theta0, _cfg(), _sgd(), 0, seed=0),
        cma_es_run(quadratic, theta0, 0.1, 0, seed=0),
        first_order_run(quadratic, exact_grad, theta0, _sgd(), 0, seed=0),
    ):
        assert result.records == []
        np.testing.assert_array_equal(result.theta, theta0)


def test_episode_accounting():
    records = []
    result = guided_es_run(quadratic, exact_grad, _theta0(), _cfg(pop=4), _sgd(), 50, seed=1, sink=records.append)
    assert records == result.records
    # 2*pop perturbed evaluations plus the logged cost at the new parameters.
    assert [r.episodes_used for r in records] == [9, 18, 27, 36, 45]
    assert [r.drs_rollouts for r in records] == [1, 2, 3, 4, 5]
    best = [r.best_cost_so_far for r in records]
    assert all(b2 <= b1 for b1, b2 in zip(best, best[1:]))
    assert all(r.seed == 1 for r in records)


def test_uncharged_monitoring_keeps_two_pop_per_iteration():
    result = guided_es_run(quadratic, exact_grad, _theta0(), _cfg(pop=4), _sgd(), 50, seed=1,
                           charge_monitoring=False)
    assert [r.episodes_used for r in result.records] == [8, 16, 24, 32, 40, 48]


def test_cma_charges_the_logged_mean():
    result = cma_es_run(quadratic, _theta0(n=4), 0.1, 40, seed=0, popsize=6)
    assert [r.episodes_used for r in result.records] == [7, 14, 21, 28, 35]
    uncharged = cma_es_run(quadratic, _theta0(n=4), 0.1, 40, seed=0, popsize=6, charge_monitoring=False)
    assert [r.episodes_used for r in uncharged.records] == [6, 12, 18, 24, 30, 36]


def test_alpha_one_matches_vanilla_bit_for_bit():
    theta0 = _theta0()
    guided = guided_es_run(quadratic, exact_grad, theta0, _cfg(alpha=1.0), _sgd(), 400, seed=2)
    vanilla = vanilla_es_run(quadratic, theta0, _cfg(alpha=0.3), _sgd(), 400, seed=2)
    assert [r.cost for r in guided.records] == [r.cost for r in vanilla.records]
    np.testing.assert_array_equal(guided.theta, vanilla.theta)
    assert all(r.drs_rollouts == 0 for r in guided.records)


def test_results_independent_of_thread_count():
    theta0 = _theta0(n=6)
    serial = guided_es_run(quadratic, exact_grad, theta0, _cfg(n=6), _sgd(6), 160, seed=4,
                           pool=EvalPool(threads=1))
    pool = EvalPool(threads=3)
    try:
        threaded = guided_es_run(quadratic, exact_grad, theta0, _cfg(n=6), _sgd(6), 160, seed=4, pool=pool)
    finally:
        pool.shutdown()
    assert [r.cost for r in serial.records] == [r.cost for r in threaded.records]


def test_exact_surrogate_beats_vanilla():
    guided, vanilla = [], []
    for seed in range(5):
        theta0 = _theta0(seed=seed)
        guided.append(guided_es_run(quadratic, exact_grad, theta0, _cfg(), _sgd(), 800, seed).records[-1].cost)
        vanilla.append(vanilla_es_run(quadratic, theta0, _cfg(), _sgd(), 800, seed).records[-1].cost)
    assert np.median(guided) < np.median(vanilla)


@pytest.mark.slow
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_rotated_surrogate_still_converges(seed):
    reference = np.random.default_rng(100 + seed).standard_normal(20)

    def rotated(theta):
        return rotate_towards(exact_grad(theta), reference, 80.0)

    result = guided_es_run(quadratic, rotated, _theta0(seed=seed), _cfg(), _sgd(), 3000, seed)
    assert result.records[-1].best_cost_so_far <= 1e-3


def test_one_sgd_step_surrogate_is_antiparallel():
    theta = np.array([1.0, -2.0, 0.5])
    direction = sim_descent_direction(exact_grad, theta, lambda: FirstOrderOptimizer("sgd", 0.1, 3), 1)
    np.testing.assert_allclose(direction, -0.1 * exact_grad(theta))


def test_inner_divergence_returns_none():
    def exploding(theta):
        return np.full_like(theta, np.nan)

    assert sim_descent_direction(exploding, np.ones(2), lambda: FirstOrderOptimizer("sgd", 0.1, 2), 3) is None


def test_sim_guided_meters_drs_calls():
    result = sim_guided_real_run(quadratic, exact_grad, _theta0(), _cfg(pop=4), _sgd(),
                                 lambda: FirstOrderOptimizer("adam", 0.05, 20), 3, 40, seed=0)
    assert [r.episodes_used for r in result.records] == [9, 18, 27, 36]
    assert [r.drs_rollouts for r in result.records] == [3, 6, 9, 12]
    assert result.records[-1].cost < quadratic(_theta0())


def test_sim_guided_skips_divergent_surrogate(caplog):
    result = sim_guided_real_run(quadratic, lambda th: np.full_like(th, np.inf), _theta0(), _cfg(pop=4), _sgd(),
                                 lambda: FirstOrderOptimizer("sgd", 0.1, 20), 2, 27, seed=0)
    assert len(result.records) == 3
    assert "no usable surrogate" in caplog.text


def test_sim_guided_requires_inner_steps():
    with pytest.raises(ValueError):
        sim_guided_real_run(quadratic, exact_grad, _theta0(), _cfg(), _sgd(),
                            lambda: FirstOrderOptimizer("sgd", 0.1, 20), 0, 40, seed=0)


def test_first_order_charges_one_episode_per_step():
    result = first_order_run(quadratic, exact_grad, _theta0(), _sgd(lr=0.25), 5, seed=0)
    assert [r.episodes_used for r in result.records] == [1, 2, 3, 4, 5]
    assert [r.drs_rollouts for r in result.records] == [1, 2, 3, 4, 5]
    # lr 0.25 on |theta|^2 halves theta every step.
    np.testing.assert_allclose(result.theta, _theta0() / 32)


def test_first_order_skips_non_finite_gradient():
    result = first_order_run(quadratic, lambda th: np.full_like(th, np.nan), _theta0(), _sgd(), 3, seed=0)
    np.testing.assert_array_equal(result.theta, _theta0())
    assert len(result.records) == 3


def test_failure_keeps_partial_records():
    calls = {"n": 0}

    def flaky(theta):
        calls["n"] += 1
        if calls["n"] > 20:
            raise SimulationError("exploded", step=7)
        return quadratic(theta)

    with pytest.raises(RunAborted) as err:
        vanilla_es_run(flaky, _theta0(), _cfg(pop=4), _sgd(), 400, seed=0, pool=EvalPool(threads=1))
    assert len(err.value.records) == 2
    assert "exploded" in str(err.value)


def _episodes_to(records, threshold):
    hits = [r.episodes_used for r in records if r.best_cost_so_far <= threshold]
    return hits[0] if hits else float("inf")


def test_zero_gap_sim_guidance_beats_vanilla_on_episodes_to_threshold():
    # The simulator is the real objective: the inner loop sees the true gradient.
    guided, vanilla = [], []
    for seed in range(5):
        theta0 = _theta0(n=10, seed=seed)
        sim_guided = sim_guided_real_run(quadratic, exact_grad, theta0, _cfg(n=10), _sgd(10, lr=0.25),
                                         lambda: FirstOrderOptimizer("sgd", 0.1, 10), 3, 1000, seed)
        plain = vanilla_es_run(quadratic, theta0, _cfg(n=10), _sgd(10, lr=0.25), 1000, seed)
        guided.append(_episodes_to(sim_guided.records, 1e-3))
        vanilla.append(_episodes_to(plain.records, 1e-3))
    assert np.isfinite(np.median(guided))
    assert np.median(guided) < np.median(vanilla)
