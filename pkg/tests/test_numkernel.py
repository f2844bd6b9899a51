import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mstan import numkernel as nk


def test_softmax_uniform_on_equal_logits():
    np.testing.assert_allclose(nk.softmax_rows(np.zeros(3)), [1 / 3] * 3, atol=1e-15)


def test_sigmoid_at_zero():
    assert nk.sigmoid(0.0) == 0.5


def test_sigmoid_no_overflow():
    s = nk.sigmoid(np.array([-800.0, 800.0]))
    assert s[0] == 0.0 and s[1] == 1.0


def test_matvec_identity():
    v = np.array([1.5, -2.0, 3.0])
    np.testing.assert_array_equal(nk.matvec(np.eye(3), v), v)


def test_shape_errors():
    with pytest.raises(nk.ShapeError):
        nk.matvec(np.eye(3), np.ones(2))
    with pytest.raises(nk.ShapeError):
        nk.add(np.ones(2), np.ones(3))
    with pytest.raises(nk.ShapeError):
        nk.matmul(np.ones((2, 3)), np.ones((2, 3)))


def test_masked_softmax_zero_weight_and_all_masked_error():
    p = nk.softmax_rows(np.array([[1.0, 5.0, 2.0]]), np.array([[True, False, True]]))
    assert p[0, 1] == 0.0
    assert abs(p.sum() - 1) < 1e-12
    with pytest.raises(ValueError):
        nk.softmax_rows(np.ones((2, 2)), np.array([[True, True], [False, False]]))


def test_masked_entries_get_no_gradient():
    rng = np.random.default_rng(3)
    x = rng.uniform(-1, 1, (4, 5))
    mask = rng.random((4, 5)) < 0.6
    mask[:, 0] = True
    p = nk.softmax_rows(x, mask)
    g = nk.softmax_rows_backward(p, rng.uniform(-1, 1, (4, 5)))
    assert np.all(g[~mask] == 0.0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=1, max_size=12))
def test_softmax_rows_sum_to_one(xs):
    p = nk.softmax_rows(np.array(xs))
    assert abs(p.sum() - 1.0) < 1e-12


def test_softplus_inverse_round_trip():
    for y in (1e-3, 0.5, 1.0, 7.0, 40.0):
        assert abs(nk.softplus(nk.softplus_inverse(y)) - y) < 1e-12 * max(1, y)


# --- finite differences -----------------------------------------------------


def test_finite_diff_square():
    g = nk.finite_diff_grad(lambda p: float(p["t"] ** 2), {"t": np.array(3.0)})
    assert abs(g["t"] - 6.0) < 1e-6


def test_finite_diff_constant():
    g = nk.finite_diff_grad(lambda p: 4.2, {"a": np.ones((2, 3))})
    assert np.max(np.abs(g["a"])) < 1e-9


def test_finite_diff_sigmoid():
    g = nk.finite_diff_grad(lambda p: nk.sigmoid(float(p["t"])), {"t": np.array(0.0)})
    assert abs(g["t"] - 0.25) < 1e-6


def test_finite_diff_restores_params_and_rejects_nonfinite():
    params = {"a": np.array([1.0, 2.0])}
    nk.finite_diff_grad(lambda p: float(np.sum(p["a"] ** 3)), params)
    np.testing.assert_array_equal(params["a"], [1.0, 2.0])
    with pytest.raises(FloatingPointError):
        nk.finite_diff_grad(lambda p: math.inf, {"a": np.ones(1)})
    with pytest.raises(ValueError):
        nk.finite_diff_grad(lambda p: 0.0, {"a": np.ones(1)}, eps=0.0)


def _check(f_forward, backward_grads, inputs):
    """Compare analytic backward with central differences of <g, forward>."""
    rng = np.random.default_rng(11)
    out = f_forward(**inputs)
    g_up = rng.uniform(-1, 1, np.shape(out))

    def objective(p):
        return float(np.sum(g_up * f_forward(**p)))

    analytic = backward_grads(inputs, g_up)
    numeric = nk.finite_diff_grad(objective, {k: np.array(v) for k, v in inputs.items()})
    for k in analytic:
        assert nk.max_relative_error(analytic[k], numeric[k]) < 1e-6, k


@pytest.mark.parametrize("seed", range(5))
def test_kernel_backward_rules_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    u = lambda *shape: rng.uniform(-1, 1, shape)  # noqa: E731
    M, v = u(3, 4), u(4)
    _check(lambda M, v: nk.matvec(M, v),
           lambda p, g: dict(zip("Mv", nk.matvec_backward(p["M"], p["v"], g))), {"M": M, "v": v})
    A, B = u(2, 3, 4), u(2, 4, 2)
    _check(lambda A, B: nk.matmul(A, B),
           lambda p, g: dict(zip("AB", nk.matmul_backward(p["A"], p["B"], g))), {"A": A, "B": B})
    a, b = u(3, 2), u(3, 2)
    _check(lambda a, b: nk.add(a, b),
           lambda p, g: dict(zip("ab", nk.add_backward(p["a"], p["b"], g))), {"a": a, "b": b})
    c = np.array(rng.uniform(-1, 1))
    _check(lambda a, c: nk.scale(a, float(c)),
           lambda p, g: dict(zip("ac", nk.scale_backward(p["a"], float(p["c"]), g))), {"a": a, "c": c})
    _check(lambda a: nk.elementwise_exp(a),
           lambda p, g: {"a": nk.elementwise_exp_backward(p["a"], g)}, {"a": a})
    _check(lambda a: nk.sigmoid(a),
           lambda p, g: {"a": nk.sigmoid_backward(p["a"], g)}, {"a": a})
    _check(lambda a: nk.softplus(a),
           lambda p, g: {"a": nk.softplus_backward(p["a"], g)}, {"a": a})
    mask = rng.random((3, 5)) < 0.7
    mask[:, 0] = True
    x = u(3, 5)
    _check(lambda x: nk.softmax_rows(x, mask),
           lambda p, g: {"x": nk.softmax_rows_backward(nk.softmax_rows(p["x"], mask), g)}, {"x": x})


def test_ops_deterministic():
    x = np.random.default_rng(0).uniform(-1, 1, (4, 6))
    assert np.array_equal(nk.softmax_rows(x), nk.softmax_rows(x.copy()))
    assert np.array_equal(nk.sigmoid(x), nk.sigmoid(x.copy()))
