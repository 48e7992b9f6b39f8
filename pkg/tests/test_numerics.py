import numpy as np
import pytest

from osnn.errors import GraphError, NonFiniteError, ShapeError
from osnn.numerics import (
    Tensor, abs2, add, backward, check_gradients, clip, cmatmul, complex_matrix, concat, cos, div, exp,
    is_unitary, log, matmul, mean, mul, numeric_grad, real_tensor, reduce_sum, relative_error, relu,
    reshape, sin, softmax, softmax_cross_entropy, sqrt, square, straight_through, sub, take, tmatmul,
    transpose,
)


def test_real_tensor_shape_and_finiteness():
    t = real_tensor([1, 2, 3, 4], (2, 2))
    assert t.dtype == np.float64 and t.shape == (2, 2)
    with pytest.raises(ShapeError):
        real_tensor([1, 2, 3], (2, 2))
    with pytest.raises(NonFiniteError):
        real_tensor([1.0, np.nan])


def test_complex_matrix_validation():
    m = complex_matrix([1, 2j, 3, 4], 2, 2)
    assert m.dtype == np.complex128
    with pytest.raises(ShapeError):
        complex_matrix([1, 2, 3], 2, 2)
    with pytest.raises(ShapeError):
        complex_matrix([1, 2, 3])
    with pytest.raises(NonFiniteError):
        complex_matrix([[1, np.inf]])


def test_matmul_dimension_check():
    with pytest.raises(ShapeError):
        matmul(np.ones((2, 3)), np.ones((2, 3)))
    assert np.allclose(matmul(np.eye(2), np.ones((2, 3))), 1.0)


def test_is_unitary():
    H = np.array([[1, 1], [1, -1]]) / np.sqrt(2)
    assert is_unitary(H)
    assert not is_unitary(2 * H)
    assert not is_unitary(np.ones((2, 3)))


def _grad_ok(build, params):
    ok, errs = check_gradients(build, params)
    assert ok, errs


@pytest.mark.parametrize("op", [add, sub, mul, div])
def test_binary_ops_with_broadcasting(op, rng):
    a = rng.uniform(0.5, 2.0, (3, 4))
    b = rng.uniform(0.5, 2.0, (1, 4))
    _grad_ok(lambda t: reduce_sum(square(op(t[0], t[1]))), [a, b])


@pytest.mark.parametrize("op", [cos, sin, sqrt, exp, log, square])
def test_unary_ops(op, rng):
    a = rng.uniform(0.5, 2.0, (5,))
    _grad_ok(lambda t: reduce_sum(mul(op(t[0]), np.arange(1.0, 6.0))), [a])


def test_relu_and_clip_away_from_kinks(rng):
    a = rng.uniform(-1, 1, (20,))
    a[np.abs(a) < 0.05] = 0.3
    _grad_ok(lambda t: reduce_sum(square(relu(t[0]))), [a])
    b = rng.uniform(-1, 1, (20,))
    b[np.abs(np.abs(b) - 0.5) < 0.05] = 0.2
    _grad_ok(lambda t: reduce_sum(square(clip(t[0], -0.5, 0.5))), [b])


def test_relu_gradient_is_zero_at_zero():
    x = Tensor.param(np.array([0.0, 1.0, -1.0]))
    g = backward(reduce_sum(relu(x)))[x]
    assert g.tolist() == [0.0, 1.0, 0.0]


def test_shape_ops(rng):
    a = rng.standard_normal((2, 3, 4))
    w = rng.standard_normal((4, 3, 2))
    _grad_ok(lambda t: reduce_sum(mul(transpose(t[0], (2, 1, 0)), w)), [a])
    _grad_ok(lambda t: reduce_sum(square(reshape(t[0], (6, 4)))), [a])
    _grad_ok(lambda t: reduce_sum(mul(reduce_sum(t[0], axis=1, keepdims=True), 2.0)), [a])
    _grad_ok(lambda t: square(mean(t[0])), [a])
    idx = np.array([0, 2, 2, 1])
    _grad_ok(lambda t: reduce_sum(square(take(t[0], idx, axis=1))), [a])
    b = rng.standard_normal((2, 1, 4))
    _grad_ok(lambda t: reduce_sum(square(concat([t[0], t[1]], axis=1))), [a, b])


def test_batched_matmul(rng):
    a = rng.standard_normal((3, 2, 4))
    b = rng.standard_normal((4, 5))
    _grad_ok(lambda t: reduce_sum(square(tmatmul(t[0], t[1]))), [a, b])
    with pytest.raises(ShapeError):
        tmatmul(Tensor.const(np.ones(3)), Tensor.const(np.ones((3, 3))))


def test_complex_pairs(rng):
    ar, ai, br, bi = (rng.standard_normal((3, 3)) for _ in range(4))
    z = cmatmul((Tensor.const(ar), Tensor.const(ai)), (Tensor.const(br), Tensor.const(bi)))
    ref = (ar + 1j * ai) @ (br + 1j * bi)
    assert np.allclose(z[0].value + 1j * z[1].value, ref)
    _grad_ok(lambda t: reduce_sum(abs2(cmatmul((t[0], t[1]), (t[2], t[3])))), [ar, ai, br, bi])


def test_softmax_cross_entropy(rng):
    logits = rng.standard_normal((6, 10))
    labels = rng.integers(0, 10, 6)
    _grad_ok(lambda t: softmax_cross_entropy(t[0], labels), [logits])
    p = softmax(logits)
    ref = -np.mean(np.log(p[np.arange(6), labels]))
    assert np.isclose(softmax_cross_entropy(Tensor.const(logits), labels).value, ref)
    with pytest.raises(ShapeError):
        softmax_cross_entropy(Tensor.const(logits), labels[:3])


def test_straight_through_mask():
    x = Tensor.param(np.array([0.2, 0.7, 1.5]))
    y = straight_through(x, np.round(x.value), np.array([1.0, 1.0, 0.0]))
    assert y.value.tolist() == [0.0, 1.0, 2.0]
    g = backward(reduce_sum(mul(y, np.array([1.0, 2.0, 3.0]))))[x]
    assert g.tolist() == [1.0, 2.0, 0.0]


def test_diamond_graph_accumulates():
    x = Tensor.param(np.array(3.0))
    y = mul(x, x)
    z = add(y, mul(y, 2.0))
    assert np.isclose(backward(z)[x], 18.0)


def test_backward_requires_scalar():
    x = Tensor.param(np.ones(3))
    with pytest.raises(GraphError):
        backward(mul(x, 2.0))


def test_cycle_detected():
    x = Tensor.param(np.array(1.0))
    y = mul(x, 2.0)
    x2 = Tensor(np.array(1.0), parents=(y,), op="fake", vjp=lambda g: (g,), requires_grad=True)
    y.parents = (x2,)
    with pytest.raises(GraphError):
        backward(y)


def test_broadcast_mismatch_raises():
    with pytest.raises(ShapeError):
        add(Tensor.const(np.ones((2, 3))), Tensor.const(np.ones((4,))))


def test_param_rejects_nan():
    with pytest.raises(NonFiniteError):
        Tensor.param([1.0, np.nan])


def test_numeric_grad_and_relative_error():
    g = numeric_grad(lambda v: np.sum(v ** 3), np.array([1.0, 2.0]))
    assert np.allclose(g, [3.0, 12.0], rtol=1e-8)
    assert relative_error([1.0, 0.0], [1.0, 0.0]) == 0.0
    assert relative_error(np.zeros(2), np.zeros(2)) == 0.0
