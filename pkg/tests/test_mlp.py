import numpy as np
import pytest

from policy.mlp import (
    DimensionError,
    MlpSpec,
    init_params,
    mlp_forward,
    mlp_forward_backward,
    param_groups,
    total_param_count,
)


def test_param_count_2_4_1():
    spec = MlpSpec(input_dim=2, hidden_dims=(4,), output_dim=1)
    assert total_param_count(spec) == 17
    assert init_params(spec, 0).shape == (17,)


def test_init_is_deterministic_per_seed():
    spec = MlpSpec(input_dim=8, hidden_dims=(16,), output_dim=1)
    np.testing.assert_array_equal(init_params(spec, 7), init_params(spec, 7))
    assert np.any(init_params(spec, 7) != init_params(spec, 8))


def test_init_biases_zero_and_weights_bounded():
    spec = MlpSpec(input_dim=4, hidden_dims=(3,), output_dim=2)
    params = init_params(spec, 3)
    (s0, e0), (s1, e1) = param_groups(spec)
    w0, b0 = params[s0:s0 + 12], params[s0 + 12:e0]
    w1, b1 = params[s1:s1 + 6], params[s1 + 6:e1]
    assert np.all(b0 == 0) and np.all(b1 == 0)
    assert np.all(np.abs(w0) <= 1 / np.sqrt(4))
    assert np.all(np.abs(w1) <= 1 / np.sqrt(3))


def test_negative_and_large_seeds_accepted():
    spec = MlpSpec(input_dim=2, hidden_dims=(2,))
    assert init_params(spec, -1).shape == (9,)
    assert init_params(spec, 2 ** 63 - 1).shape == (9,)


def test_param_groups_partition():
    spec = MlpSpec(input_dim=3, hidden_dims=(5, 4), output_dim=2)
    groups = param_groups(spec)
    assert groups[0][0] == 0 and groups[-1][1] == spec.total_param_count
    for (_, stop), (start, _) in zip(groups, groups[1:]):
        assert stop == start


def test_zero_params_give_zero_output():
    spec = MlpSpec(input_dim=3, hidden_dims=(4,), output_dim=2)
    out = mlp_forward(spec, np.zeros(spec.total_param_count), [0.3, -2.0, 5.0])
    np.testing.assert_array_equal(out, np.zeros(2))


def test_tanh_output_strictly_bounded():
    spec = MlpSpec(input_dim=3, hidden_dims=(8,), output_dim=1)
    params = 10.0 * init_params(spec, 1)
    rng = np.random.default_rng(0)
    for obs in rng.standard_normal((1000, 3)):
        out = mlp_forward(spec, params, obs)
        assert np.all(np.abs(out) < 1.0)


def test_hand_computed_2_2_1():
    spec = MlpSpec(input_dim=2, hidden_dims=(2,), output_dim=1)
    w1 = np.array([[0.5, -1.0], [2.0, 0.25]])
    b1 = np.array([0.1, -0.2])
    w2 = np.array([[1.5, -0.5]])
    b2 = np.array([0.05])
    params = np.concatenate([w1.ravel(), b1, w2.ravel(), b2])
    obs = np.array([0.4, -0.3])
    expected = np.tanh(w2 @ np.tanh(w1 @ obs + b1) + b2)
    np.testing.assert_allclose(mlp_forward(spec, params, obs), expected, rtol=0, atol=1e-15)


def test_linear_output_squash():
    spec = MlpSpec(input_dim=1, hidden_dims=(1,), output_dim=1, output_squash="none")
    params = np.array([1.0, 0.0, 3.0, 2.0])
    np.testing.assert_allclose(mlp_forward(spec, params, [0.5]), [3.0 * np.tanh(0.5) + 2.0])


def test_dimension_errors():
    spec = MlpSpec(input_dim=2, hidden_dims=(2,))
    with pytest.raises(DimensionError):
        mlp_forward(spec, np.zeros(9), [1.0, 2.0, 3.0])
    with pytest.raises(DimensionError):
        mlp_forward(spec, np.zeros(8), [1.0, 2.0])
    with pytest.raises(DimensionError):
        mlp_forward_backward(spec, np.zeros(9), [1.0, 2.0], [1.0, 1.0])


@pytest.mark.parametrize("squash", ["tanh", "none"])
def test_backward_matches_finite_differences(squash):
    spec = MlpSpec(input_dim=3, hidden_dims=(4, 3), output_dim=2, output_squash=squash)
    rng = np.random.default_rng(5)
    params = rng.standard_normal(spec.total_param_count)
    obs = rng.standard_normal(3)
    adj = rng.standard_normal(2)
    out, param_grad, obs_grad = mlp_forward_backward(spec, params, obs, adj)
    np.testing.assert_array_equal(out, mlp_forward(spec, params, obs))

    h = 1e-6
    fd_params = np.array([
        (adj @ mlp_forward(spec, params + h * e, obs) - adj @ mlp_forward(spec, params - h * e, obs)) / (2 * h)
        for e in np.eye(spec.total_param_count)])
    fd_obs = np.array([
        (adj @ mlp_forward(spec, params, obs + h * e) - adj @ mlp_forward(spec, params, obs - h * e)) / (2 * h)
        for e in np.eye(3)])
    np.testing.assert_allclose(param_grad, fd_params, atol=1e-8)
    np.testing.assert_allclose(obs_grad, fd_obs, atol=1e-8)
