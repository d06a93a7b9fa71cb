import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from merl.nn_core import (
    AdamState,
    MlpSpec,
    RngStream,
    adam_step,
    backward,
    backward_batch,
    deserialize_params,
    forward,
    forward_batch,
    gaussian,
    init_params,
    param_count,
    serialize_params,
    soft_update,
)


def straight_line_forward(spec, params, x):
    """Independent loop-based evaluator used as the forward oracle."""
    off = 0
    h = np.array(x, dtype=float)
    n_layers = len(spec.layer_dims)
    for i, (fi, fo) in enumerate(spec.layer_dims):
        w = params[off : off + fi * fo].reshape(fo, fi)
        off += fi * fo
        b = params[off : off + fo]
        off += fo
        z = np.array([np.dot(w[j], h) + b[j] for j in range(fo)])
        if i < n_layers - 1 or spec.output_activation == "tanh":
            h = np.tanh(z)
        else:
            h = z
    return h


def finite_diff_param_grad(spec, params, x, upstream, h=1e-5):
    """Central-difference gradient of upstream . output w.r.t. params."""
    grad = np.zeros_like(params)
    for i in range(params.size):
        p_hi = params.copy()
        p_lo = params.copy()
        p_hi[i] += h
        p_lo[i] -= h
        f_hi = float(upstream @ forward(spec, p_hi, x))
        f_lo = float(upstream @ forward(spec, p_lo, x))
        grad[i] = (f_hi - f_lo) / (2 * h)
    return grad


def rel_err(a, b, floor=1e-4):
    return np.abs(a - b) / np.maximum.reduce([np.abs(a), np.abs(b), np.full_like(a, floor)])


def test_zero_params_give_zero_output():
    spec = MlpSpec(3, (5,), 2)
    out = forward(spec, np.zeros(param_count(spec)), np.array([0.3, -0.7, 2.0]))
    assert np.all(out == 0.0)


def test_two_layer_hand_composition():
    # 1-1-1 net, weights 1, biases 0: output = tanh(tanh(0.5))
    spec = MlpSpec(1, (1,), 1)
    params = np.array([1.0, 0.0, 1.0, 0.0])
    out = forward(spec, params, np.array([0.5]))
    assert out[0] == pytest.approx(np.tanh(np.tanh(0.5)), abs=1e-15)


def test_forward_matches_straight_line_oracle():
    rng = RngStream(42)
    spec = MlpSpec(4, (8,), 2)
    params = init_params(spec, rng)
    x = rng.gen.normal(size=4)
    np.testing.assert_allclose(
        forward(spec, params, x), straight_line_forward(spec, params, x), atol=1e-12
    )


def test_forward_linear_output_head():
    rng = RngStream(1)
    spec = MlpSpec(3, (6,), 2, output_activation="linear")
    params = init_params(spec, rng)
    x = rng.gen.normal(size=3)
    np.testing.assert_allclose(
        forward(spec, params, x), straight_line_forward(spec, params, x), atol=1e-12
    )


def test_forward_batch_consistent_with_single():
    rng = RngStream(5)
    spec = MlpSpec(4, (7, 5), 3)
    params = init_params(spec, rng)
    xs = rng.gen.normal(size=(6, 4))
    batch = forward_batch(spec, params, xs)
    for i in range(6):
        # BLAS may pick different kernels for 6-row and 1-row products
        np.testing.assert_allclose(batch[i], forward(spec, params, xs[i]), rtol=0, atol=1e-14)


def test_forward_deterministic_and_bounded():
    rng = RngStream(9)
    spec = MlpSpec(5, (11,), 4)
    params = init_params(spec, rng)
    x = rng.gen.normal(size=5)
    out1 = forward(spec, params, x)
    out2 = forward(spec, params, x)
    assert np.array_equal(out1, out2)
    assert np.all(np.abs(out1) < 1.0)


def test_forward_dimension_mismatch_raises():
    spec = MlpSpec(3, (4,), 2)
    params = np.zeros(param_count(spec))
    with pytest.raises(ValueError):
        forward(spec, params, np.zeros(4))
    with pytest.raises(ValueError):
        forward(spec, params[:-1], np.zeros(3))


def test_backward_zero_upstream():
    rng = RngStream(3)
    spec = MlpSpec(3, (5,), 2)
    params = init_params(spec, rng)
    pg, xg = backward(spec, params, rng.gen.normal(size=3), np.zeros(2))
    assert np.all(pg == 0.0)
    assert np.all(xg == 0.0)


def test_backward_linear_single_layer_exact():
    # one linear layer: d(upstream . (Wx+b)) / dW_ij = upstream_i * x_j
    spec = MlpSpec(3, (), 2, output_activation="linear")
    rng = RngStream(8)
    params = init_params(spec, rng)
    x = rng.gen.normal(size=3)
    u = rng.gen.normal(size=2)
    pg, xg = backward(spec, params, x, u)
    expected_w = np.outer(u, x).ravel()
    np.testing.assert_allclose(pg[:6], expected_w, atol=1e-15)
    np.testing.assert_allclose(pg[6:], u, atol=1e-15)
    w = params[:6].reshape(2, 3)
    np.testing.assert_allclose(xg, w.T @ u, atol=1e-15)


@pytest.mark.parametrize("out_act", ["tanh", "linear"])
def test_backward_matches_finite_differences(out_act):
    rng = RngStream(17)
    spec = MlpSpec(4, (6, 5), 3, output_activation=out_act)
    params = init_params(spec, rng)
    x = rng.gen.normal(size=4)
    u = rng.gen.normal(size=3)
    pg, _ = backward(spec, params, x, u)
    fd = finite_diff_param_grad(spec, params, x, u)
    assert rel_err(pg, fd).max() < 1e-4


def test_backward_batch_sums_samples():
    rng = RngStream(21)
    spec = MlpSpec(3, (4,), 2)
    params = init_params(spec, rng)
    xs = rng.gen.normal(size=(5, 3))
    us = rng.gen.normal(size=(5, 2))
    pg_batch, xg_batch = backward_batch(spec, params, xs, us)
    pg_sum = np.zeros_like(params)
    for i in range(5):
        pg_i, xg_i = backward(spec, params, xs[i], us[i])
        pg_sum += pg_i
        np.testing.assert_allclose(xg_batch[i], xg_i, atol=1e-12)
    np.testing.assert_allclose(pg_batch, pg_sum, atol=1e-12)


def test_adam_zero_grad_is_identity():
    state = AdamState.for_params(4, lr=0.01)
    params = np.array([1.0, -2.0, 0.5, 3.0])
    for _ in range(3):
        params2 = adam_step(state, params, np.zeros(4))
        np.testing.assert_array_equal(params2, params)
        params = params2
    assert state.t == 3


def test_adam_first_step_magnitude():
    # bias correction makes the first step ~ lr * g / (|g| + eps)
    state = AdamState.for_params(1, lr=0.01)
    params = np.array([0.0])
    out = adam_step(state, params, np.array([2.0]))
    assert out[0] == pytest.approx(-0.01, rel=1e-6)


def test_adam_deterministic():
    def run():
        st_ = AdamState.for_params(3, lr=0.005)
        p = np.array([0.1, 0.2, 0.3])
        for g in ([1.0, -1.0, 0.5], [0.2, 0.2, 0.2]):
            p = adam_step(st_, p, np.array(g))
        return p

    np.testing.assert_array_equal(run(), run())


def test_adam_rejects_nonfinite_grad():
    state = AdamState.for_params(2, lr=0.01)
    with pytest.raises(ValueError):
        adam_step(state, np.zeros(2), np.array([1.0, np.nan]))


def test_soft_update_endpoints_and_formula():
    target = np.array([1.0, 1.0])
    source = np.array([0.0, 2.0])
    np.testing.assert_array_equal(soft_update(target, source, 1.0), source)
    np.testing.assert_array_equal(soft_update(target, source, 0.0), target)
    out = soft_update(np.array([1.0]), np.array([0.0]), 0.01)
    assert out[0] == pytest.approx(0.99, abs=1e-15)
    with pytest.raises(ValueError):
        soft_update(target, source, 1.5)


def test_gaussian_statistics():
    rng = RngStream(2024)
    draws = gaussian(rng, 0.4, 100_000)
    assert 0.395 < draws.std() < 0.405
    assert np.all(gaussian(rng, 0.0, 10) == 0.0)


def test_gaussian_seed_reproducibility():
    a = gaussian(RngStream(77), 1.0, 100)
    b = gaussian(RngStream(77), 1.0, 100)
    np.testing.assert_array_equal(a, b)


@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=64))
@settings(max_examples=50, deadline=None)
def test_params_serialize_roundtrip(values):
    vec = np.array(values, dtype=np.float64)
    blob = serialize_params(vec)
    out, end = deserialize_params(blob)
    assert end == len(blob)
    np.testing.assert_array_equal(out, vec)


def test_init_params_bounds_per_layer():
    spec = MlpSpec(16, (9,), 4)
    params = init_params(spec, RngStream(0))
    first = params[: 16 * 9 + 9]
    second = params[16 * 9 + 9 :]
    assert np.all(np.abs(first) <= 1 / 4.0)
    assert np.all(np.abs(second) <= 1 / 3.0)
    assert param_count(spec) == params.size
