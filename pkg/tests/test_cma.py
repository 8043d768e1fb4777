import logging

import numpy as np
import pytest

from es_service.cma import MAX_CONDITION, _decompose, cma_ask, cma_init, cma_tell, default_popsize
from es_service.runners import cma_es_run
from es_service.sampling import substream


def sphere(theta):
    return float(theta @ theta)


def test_default_population():
    assert default_popsize(10) == 10
    assert cma_init(np.zeros(10), 0.5).lam == 10
    with pytest.raises(ValueError):
        cma_init(np.zeros(3), 0.5, lam=3)
    with pytest.raises(ValueError):
        cma_init(np.zeros(3), 0.0)


def test_weights_are_normalized_and_decreasing():
    state = cma_init(np.zeros(5), 1.0, lam=12)
    assert state.mu == 6
    assert state.weights.sum() == pytest.approx(1.0)
    assert np.all(np.diff(state.weights) < 0)


def test_tell_recombines_best_half():
    state = cma_init(np.ones(4), 0.3, lam=8)
    candidates = cma_ask(state, None, substream(0, 0, 0))
    losses = np.array([sphere(c) for c in candidates])
    updated = cma_tell(state, candidates, losses)
    best = candidates[np.argsort(losses)[:state.mu]]
    np.testing.assert_allclose(updated.mean, state.weights @ best)
    assert updated.generation == 1 and updated.counteval == 8
    np.testing.assert_allclose(updated.cov, updated.cov.T)
    assert np.all(np.linalg.eigvalsh(updated.cov) > 0)


def test_ask_is_deterministic():
    state = cma_init(np.zeros(3), 0.5)
    np.testing.assert_array_equal(cma_ask(state, 6, substream(1, 2, 0)), cma_ask(state, 6, substream(1, 2, 0)))


def test_tell_rejects_non_finite_losses():
    state = cma_init(np.zeros(3), 0.5, lam=4)
    candidates = cma_ask(state, None, substream(0, 0, 0))
    with pytest.raises(ValueError):
        cma_tell(state, candidates, np.array([1.0, np.inf, 2.0, 3.0]))


def test_reconditioning(caplog):
    cov = np.diag([1.0, 1e-16])
    with caplog.at_level(logging.WARNING):
        fixed, _, scale = _decompose(cov)
    assert "ill-conditioned" in caplog.text
    eig = np.linalg.eigvalsh(fixed)
    assert eig.min() > 0 and eig.max() / eig.min() <= MAX_CONDITION * 1.01
    assert np.all(scale > 0)


def test_run_is_deterministic():
    first = cma_es_run(sphere, np.ones(4), 0.5, budget=200, seed=3)
    second = cma_es_run(sphere, np.ones(4), 0.5, budget=200, seed=3)
    assert [r.cost for r in first.records] == [r.cost for r in second.records]
    np.testing.assert_array_equal(first.theta, second.theta)


@pytest.mark.slow
def test_sphere_benchmark():
    result = cma_es_run(sphere, np.ones(10), 0.5, budget=5000, seed=0)
    assert result.records[-1].episodes_used <= 5000
    assert result.records[-1].best_cost_so_far <= 1e-8
