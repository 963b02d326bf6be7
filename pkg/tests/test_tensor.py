"""Autodiff core: forward oracles, backward linearity, gradient checks."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from histdis import tensor as T
from histdis.errors import DegenerateInputError, DimensionError
from histdis.tensor import Parameter, Tensor, grad_check


def test_conv_identity_2x2():
    inp = Tensor(np.array([[1.0, 2.0], [3.0, 4.0]])[None])
    ker = Tensor(np.array([[1.0, 0.0], [0.0, 1.0]])[None, None])
    out = T.conv2d_valid(inp, ker)
    assert out.data.shape == (1, 1, 1)
    assert out.data[0, 0, 0] == pytest.approx(5.0, abs=1e-12)


def test_conv_ones_3x3():
    inp = Tensor(np.ones((1, 3, 3)))
    ker = Tensor(np.ones((1, 1, 3, 3)))
    out = T.conv2d_valid(inp, ker)
    assert out.data[0, 0, 0] == pytest.approx(9.0, abs=1e-12)


def test_conv_1x1_identity_kernel():
    rng = np.random.default_rng(0)
    img = rng.uniform(size=(3, 4, 4))
    ker = np.zeros((3, 3, 1, 1))
    for c in range(3):
        ker[c, c, 0, 0] = 1.0
    out = T.conv2d_valid(Tensor(img), Tensor(ker))
    np.testing.assert_allclose(out.data, img, atol=1e-15)


def test_conv_shape_errors():
    with pytest.raises(DimensionError):
        T.conv2d_valid(Tensor(np.ones((2, 4, 4))), Tensor(np.ones((1, 3, 2, 2))))
    with pytest.raises(DimensionError):
        T.conv2d_valid(Tensor(np.ones((3, 2, 2))), Tensor(np.ones((1, 3, 3, 3))))


def test_maxpool_oracle():
    out = T.maxpool2(Tensor(np.array([[1.0, 2.0], [3.0, 4.0]])[None]))
    assert out.data[0, 0, 0] == pytest.approx(4.0, abs=1e-12)


def test_maxpool_tie_routes_to_first():
    p = Parameter(np.full((1, 2, 2), 7.0))
    out = T.tsum(T.maxpool2(p))
    out.backward()
    expected = np.zeros((1, 2, 2))
    expected[0, 0, 0] = 1.0
    np.testing.assert_array_equal(p.grad, expected)


def test_avgpool_oracle():
    out = T.avgpool2(Tensor(np.array([[1.0, 2.0], [3.0, 4.0]])))
    assert out.data[0, 0] == pytest.approx(2.5, abs=1e-12)


def test_cosine_oracle():
    a = Tensor(np.array([1.0, 1.0]))
    b = Tensor(np.array([1.0, 0.0]))
    assert T.cosine_similarity(a, b).item() == pytest.approx(1.0 / np.sqrt(2.0),
                                                             abs=1e-12)


def test_cosine_degenerate_norm():
    with pytest.raises(DegenerateInputError):
        T.cosine_similarity(Tensor(np.zeros(3)), Tensor(np.ones(3)))


def test_scalar_div_degenerate():
    with pytest.raises(DegenerateInputError):
        T.scalar_div(Tensor(np.ones(3)), Tensor(0.0))


def test_backward_requires_scalar():
    t = Tensor(np.ones(3))
    with pytest.raises(DimensionError):
        t.backward()


def test_relu_subgradient_zero_at_zero():
    p = Parameter(np.array([0.0, -1.0, 2.0]))
    T.tsum(T.relu(p)).backward()
    np.testing.assert_array_equal(p.grad, [0.0, 0.0, 1.0])


def test_backward_linearity():
    """grad of (f + g) equals grad f + grad g to 1e-12."""
    rng = np.random.default_rng(3)
    data = rng.uniform(-1, 1, size=(4,))
    w = rng.uniform(-1, 1, size=(4,))

    def grad_of(build):
        p = Parameter(data.copy())
        build(p).backward()
        return p.grad.copy()

    f = lambda p: T.tsum(T.mul(T.sin(p), Tensor(w)))
    g = lambda p: T.tsum(T.mul(p, p))
    gsum = grad_of(lambda p: T.add(f(p), g(p)))
    np.testing.assert_allclose(gsum, grad_of(f) + grad_of(g), atol=1e-12)


def test_diamond_graph_accumulates_once():
    # y = (x + x) * x = 2 x^2, dy/dx = 4 x
    p = Parameter(np.array(3.0))
    y = T.mul(T.add(p, p), p)
    y.backward()
    assert p.grad == pytest.approx(12.0, abs=1e-12)


def test_broadcast_gradient_shapes():
    a = Parameter(np.ones((3, 1, 4)))
    b = Parameter(np.ones((5, 4)))
    T.tsum(T.mul(a, b)).backward()
    assert a.grad.shape == (3, 1, 4)
    assert b.grad.shape == (5, 4)
    np.testing.assert_allclose(a.grad, 5.0)
    np.testing.assert_allclose(b.grad, 3.0)


def test_concat_backward_routes_segments():
    a = Parameter(np.array([1.0, 2.0]))
    b = Parameter(np.array([3.0]))
    w = Tensor(np.array([10.0, 20.0, 30.0]))
    T.tsum(T.mul(T.concat([a, b]), w)).backward()
    np.testing.assert_array_equal(a.grad, [10.0, 20.0])
    np.testing.assert_array_equal(b.grad, [30.0])


def test_grad_check_passes_composite():
    rng = np.random.default_rng(1)
    p = Parameter(rng.uniform(0.5, 1.5, size=(3, 3)))
    w = Tensor(rng.uniform(-1, 1, size=(3, 3)))
    rep = grad_check(lambda: T.tsum(T.mul(T.sigmoid(T.log(p)), w)), [p])
    assert rep.passed
    assert rep.max_rel_err < 1e-4


def test_grad_check_catches_wrong_gradient():
    p = Parameter(np.array([0.7, -0.3]))

    def bad():
        inner = T.mul(p, p)
        # identity forward, doubled gradient backward
        wrong = Tensor(inner.data, _parents=(inner,),
                       _backward=lambda g: inner._accum(2.0 * g))
        return T.tsum(wrong)

    rep = grad_check(bad, [p])
    assert not rep.passed


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=2, max_size=8))
def test_sum_matches_numpy(vals):
    t = Tensor(np.asarray(vals))
    assert T.tsum(t).item() == pytest.approx(float(np.sum(vals)), abs=1e-9)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_mul_gradient_is_other_operand(seed):
    rng = np.random.default_rng(seed)
    a = Parameter(rng.uniform(-2, 2, size=(5,)))
    b = Parameter(rng.uniform(-2, 2, size=(5,)))
    T.tsum(T.mul(a, b)).backward()
    np.testing.assert_allclose(a.grad, b.data, atol=1e-12)
    np.testing.assert_allclose(b.grad, a.data, atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_cosine_bounded(seed):
    rng = np.random.default_rng(seed)
    a = Tensor(rng.normal(size=6))
    b = Tensor(rng.normal(size=6))
    val = T.cosine_similarity(a, b).item()
    assert -1.0 - 1e-12 <= val <= 1.0 + 1e-12
