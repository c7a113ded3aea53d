import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dsdock import diffcore as dc

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def param(a) -> dc.Tensor:
    return dc.Tensor(np.asarray(a, dtype=float), requires_grad=True)


def gradients_ok(f, params, tol=1e-6, **kw) -> bool:
    return dc.check_gradients(lambda ps: f(*ps), params, **kw) < tol


# --- matmul ------------------------------------------------------------------

def test_matmul_examples():
    x = np.random.default_rng(0).normal(size=(2, 3))
    np.testing.assert_array_equal((dc.Tensor(np.eye(2)) @ dc.Tensor(x)).data, x)
    out = dc.Tensor([[1.0, 2.0], [3.0, 4.0]]) @ dc.Tensor([[1.0], [1.0]])
    np.testing.assert_array_equal(out.data, [[3.0], [7.0]])


def test_matmul_gradient_is_ones_times_b_transpose():
    rng = np.random.default_rng(1)
    a, b = param(rng.normal(size=(3, 4))), param(rng.normal(size=(4, 2)))
    ga, gb = dc.backward(dc.total(a @ b), [a, b])
    np.testing.assert_allclose(ga, np.ones((3, 2)) @ b.data.T, rtol=1e-15)
    np.testing.assert_allclose(gb, a.data.T @ np.ones((3, 2)), rtol=1e-15)
    assert gradients_ok(lambda a, b: dc.total(a @ b), [a, b])


def test_matmul_shape_mismatch():
    with pytest.raises(dc.ShapeMismatch):
        dc.matmul(dc.Tensor(np.ones((2, 3))), dc.Tensor(np.ones((2, 3))))


# --- elementwise -------------------------------------------------------------

def test_relu_and_tanh_examples():
    np.testing.assert_array_equal(dc.relu(dc.Tensor([-1.0, 0.0, 2.0])).data, [0.0, 0.0, 2.0])
    x = param(0.0)
    y = dc.tanh(x)
    assert y.item() == 0.0
    assert dc.backward(y, [x])[0] == 1.0


def test_relu_subgradient_zero_at_kink():
    x = param([0.0, 1.0, -1.0])
    (g,) = dc.backward(dc.total(dc.relu(x)), [x])
    np.testing.assert_array_equal(g, [0.0, 1.0, 0.0])


def test_exp_weight_example():
    w = dc.exp(dc.scale(dc.Tensor(-1.0), -0.8))
    assert abs(w.item() - 2.225541) < 1e-6


def test_elementwise_map_kinds():
    a, b = dc.Tensor([1.0, -2.0]), dc.Tensor([3.0, 4.0])
    np.testing.assert_array_equal(dc.elementwise_map("add", a, b).data, [4.0, 2.0])
    np.testing.assert_array_equal(dc.elementwise_map("mul", a, b).data, [3.0, -8.0])
    np.testing.assert_array_equal(dc.elementwise_map("relu", a).data, [1.0, 0.0])
    with pytest.raises(ValueError):
        dc.elementwise_map("sqrt", a)


def test_broadcast_only_exact_or_scalar():
    dc.add(dc.Tensor(np.ones(3)), dc.Tensor(2.0))
    with pytest.raises(dc.ShapeMismatch):
        dc.add(dc.Tensor(np.ones(3)), dc.Tensor(np.ones(2)))


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (3, 4), elements=finite), arrays(np.float64, (3, 4), elements=finite))
def test_elementwise_gradients_property(x, y):
    # keep relu and product away from kinks and the exponent bounded
    x = x + np.where(np.abs(x) < 1e-3, 0.5, 0.0)
    a, b = param(x), param(y)
    f = lambda a, b: dc.total(dc.relu(a) * dc.tanh(b) + dc.exp(dc.scale(b, 0.1)) * a)  # noqa: E731
    assert gradients_ok(f, [a, b], tol=1e-4)


# --- segment ops -------------------------------------------------------------

def test_segment_sum_examples():
    out = dc.segment_sum(dc.Tensor([[1.0], [2.0], [3.0]]), np.array([0, 0, 1]), 2)
    np.testing.assert_array_equal(out.data, [[3.0], [3.0]])
    out = dc.segment_sum(dc.Tensor([[1.0]]), np.array([2]), 3)
    np.testing.assert_array_equal(out.data, [[0.0], [0.0], [1.0]])
    with pytest.raises(dc.IndexOutOfRange):
        dc.segment_sum(dc.Tensor([[1.0]]), np.array([3]), 3)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 100), st.integers(1, 8), st.integers(1, 4), st.integers(0, 2**31))
def test_segment_sum_matches_naive_loop(e, n, d, seed):
    rng = np.random.default_rng(seed)
    values = rng.normal(size=(e, d))
    index = rng.integers(0, n, e)
    naive = np.zeros((n, d))
    for row in range(e):
        for col in range(d):
            naive[index[row], col] += values[row, col]
    got = dc.segment_sum(dc.Tensor(values), index, n).data
    np.testing.assert_allclose(got, naive, rtol=1e-12, atol=1e-12)
    # gathering back gives each row its group total
    np.testing.assert_allclose(dc.gather(dc.Tensor(got), index).data, naive[index], rtol=1e-12, atol=1e-12)


def test_segment_sum_and_gather_gradients():
    rng = np.random.default_rng(2)
    v = param(rng.normal(size=(7, 3)))
    idx = np.array([0, 2, 2, 1, 0, 2, 1])
    w = rng.normal(size=(3, 3))
    assert gradients_ok(lambda v: dc.total(dc.segment_sum(v, idx, 3) * dc.Tensor(w)), [v])
    up = dc.Tensor(rng.normal(size=(7, 3)))
    assert gradients_ok(lambda v: dc.total(dc.gather(v, idx) * up), [v])


def test_segment_mean():
    np.testing.assert_array_equal(dc.segment_mean(dc.Tensor([[1.0], [3.0]]), [0, 0], 1).data, [[2.0]])
    out = dc.segment_mean(dc.Tensor([[1.0], [3.0], [10.0]]), [0, 0, 1], 2).data
    np.testing.assert_array_equal(out, [[2.0], [10.0]])
    v = param([[1.0], [3.0], [10.0]])
    (g,) = dc.backward(dc.total(dc.segment_mean(v, [0, 0, 1], 2)), [v])
    np.testing.assert_array_equal(g, [[0.5], [0.5], [1.0]])
    with pytest.raises(dc.EmptySegment):
        dc.segment_mean(dc.Tensor([[1.0]]), [0], 2)


def test_segment_softmax():
    p = dc.segment_softmax(dc.Tensor([[0.3], [0.3], [0.3], [5.0]]), [0, 0, 0, 1], 2).data[:, 0]
    np.testing.assert_allclose(p, [1 / 3, 1 / 3, 1 / 3, 1.0], rtol=1e-15)
    s = param(np.random.default_rng(3).normal(size=(6, 1)))
    w = dc.Tensor(np.random.default_rng(4).normal(size=(6, 1)))
    assert gradients_ok(lambda s: dc.total(dc.segment_softmax(s, [0, 1, 0, 1, 1, 2], 3) * w), [s])


def test_segment_index_reuse_and_mismatch():
    seg = dc.SegmentIndex([0, 1, 1], 2)
    np.testing.assert_array_equal(dc.segment_sum(dc.Tensor(np.ones((3, 1))), seg, 2).data, [[1], [2]])
    with pytest.raises(dc.ShapeMismatch):
        dc.segment_sum(dc.Tensor(np.ones((3, 1))), seg, 3)


def test_relational_matmul_matches_loop():
    rng = np.random.default_rng(5)
    h, w = rng.normal(size=(5, 3)), rng.normal(size=(4, 3, 2))
    node, rel = np.array([4, 0, 2, 2, 1, 0]), np.array([3, 1, 0, 3, 1, 2])
    index = dc.RelationalIndex(node, rel, 4)
    got = dc.relational_matmul(dc.Tensor(h), dc.Tensor(w), index).data
    want = np.stack([h[n] @ w[r] for n, r in zip(node, rel)])
    np.testing.assert_allclose(got, want, rtol=1e-14)
    hp, wp = param(h), param(w)
    up = dc.Tensor(rng.normal(size=(6, 2)))
    assert gradients_ok(lambda a, b: dc.total(dc.relational_matmul(a, b, index) * up), [hp, wp])


def test_sparse_matmul_gradient_large_and_small():
    rng = np.random.default_rng(6)
    for rows, cols in ((3, 4), (90, 80)):  # dense and sparse code paths
        m = (rng.random((rows, cols)) < 0.1) * rng.normal(size=(rows, cols))
        op = dc.SparseOperator(m)
        x = param(rng.normal(size=(cols, 2)))
        np.testing.assert_allclose(dc.sparse_matmul(op, x).data, m @ x.data, rtol=1e-13, atol=1e-13)
        up = dc.Tensor(rng.normal(size=(rows, 2)))
        assert gradients_ok(lambda x: dc.total(dc.sparse_matmul(op, x) * up), [x])


# --- layer norm and dropout -------------------------------------------------

def test_layer_norm_examples():
    gain, bias = dc.Tensor([2.0, 3.0]), dc.Tensor([0.5, -1.0])
    np.testing.assert_allclose(dc.layer_norm(dc.Tensor([[4.0, 4.0]]), gain, bias).data, [[0.5, -1.0]])
    out = dc.layer_norm(dc.Tensor([[1.0, 3.0]]), dc.Tensor([1.0, 1.0]), dc.Tensor([0.0, 0.0])).data
    np.testing.assert_allclose(out, [[-1 / math.sqrt(1 + 1e-5), 1 / math.sqrt(1 + 1e-5)]], rtol=1e-15)
    with pytest.raises(dc.ShapeMismatch):
        dc.layer_norm(dc.Tensor(np.ones((2, 3))), gain, bias)


def test_layer_norm_gradient():
    rng = np.random.default_rng(7)
    x, g, b = param(rng.normal(size=(4, 8))), param(rng.normal(size=8)), param(rng.normal(size=8))
    up = dc.Tensor(rng.normal(size=(4, 8)))
    assert gradients_ok(lambda x, g, b: dc.total(dc.layer_norm(x, g, b) * up), [x, g, b], tol=1e-5)


def test_dropout():
    x = dc.Tensor(np.ones((100, 100)))
    assert dc.dropout(x, 0.0, np.random.default_rng(0), True) is x
    assert dc.dropout(x, 0.5, np.random.default_rng(0), False) is x
    out = dc.dropout(x, 0.5, np.random.default_rng(0), True).data
    assert abs((out != 0).mean() - 0.5) <= 0.02
    assert set(np.unique(out)) == {0.0, 2.0}
    again = dc.dropout(x, 0.5, np.random.default_rng(0), True).data
    np.testing.assert_array_equal(out, again)
    with pytest.raises(ValueError):
        dc.dropout(x, 1.0, np.random.default_rng(0), True)


# --- backward and gradient checking -----------------------------------------

def test_backward_basics():
    x = param(3.0)
    assert dc.backward(x, [x])[0] == 1.0
    w, a, b = param(2.0), dc.Tensor(5.0), dc.Tensor(7.0)
    assert dc.backward(w * a + w * b, [w])[0] == 12.0
    unused = param([1.0, 2.0])
    _, g_unused = dc.backward(w * a, [w, unused])
    np.testing.assert_array_equal(g_unused, [0.0, 0.0])
    with pytest.raises(dc.NonScalarLoss):
        dc.backward(dc.Tensor([1.0, 2.0]) * w)


def test_relu_matmul_gradient_random_3x3():
    rng = np.random.default_rng(8)
    w, h = param(rng.normal(size=(3, 3))), param(rng.normal(size=(3, 3)))
    assert gradients_ok(lambda w, h: dc.total(dc.relu(w @ h)), [w, h], tol=1e-4, kink_tol=1e-3)


def test_check_gradients_quadratic():
    w = param(3.0)
    report = dc.gradient_report(lambda ps: ps[0] * ps[0], [w])
    assert report.checked == 1
    assert dc.check_gradients(lambda ps: ps[0] * ps[0], [w]) < 1e-9


def test_gradient_report_flags_wrong_gradient():
    # a deliberately broken op: forward doubles, backward claims identity
    def broken(x):
        return dc._result(x.data * 2.0, (x,), "broken", lambda g: dc._accum(x, g))

    x = param([1.0, -2.0])
    assert dc.check_gradients(lambda ps: dc.total(broken(ps[0])), [x]) > 0.3


def test_kink_straddling_coordinate_is_skipped():
    x = param([1e-7, 1.0])
    report = dc.gradient_report(lambda ps: dc.total(dc.relu(ps[0])), [x], kink_tol=1e-3)
    assert report.skipped_kinks == 1 and report.checked == 1


def test_forward_is_pure_and_repeatable():
    rng = np.random.default_rng(9)
    x = param(rng.normal(size=(4, 3)))
    before = x.data.copy()
    runs = [dc.layer_norm(x, dc.Tensor(np.ones(3)), dc.Tensor(np.zeros(3))).data for _ in range(2)]
    np.testing.assert_array_equal(runs[0], runs[1])
    np.testing.assert_array_equal(x.data, before)


def test_no_grad_records_nothing():
    x = param([1.0, 2.0])
    with dc.no_grad():
        y = dc.total(x * x)
    assert not y.requires_grad
    assert dc.total(x * x).requires_grad
