import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qshield import numerics
from qshield.errors import ShapeMismatch
from qshield.rng import normal_array, uniform_array


def test_relu_and_backward():
    x = np.array([-2.0, -0.0, 0.0, 0.5, 3.0])
    assert np.array_equal(numerics.relu(x), [0, 0, 0, 0.5, 3.0])
    d = numerics.relu_backward(x, np.ones_like(x))
    assert np.array_equal(d, [0, 0, 0, 1, 1])


def test_sigmoid_extremes_do_not_overflow():
    x = np.array([-500.0, -30.0, 0.0, 30.0, 500.0])
    y = numerics.sigmoid(x)
    assert np.all(np.isfinite(y))
    assert y[0] == pytest.approx(0.0, abs=1e-200)
    assert y[2] == 0.5
    assert y[4] == pytest.approx(1.0)


def test_sigmoid_backward_uses_output():
    x = np.array([0.3, -1.2])
    y = numerics.sigmoid(x)
    d = numerics.sigmoid_backward(y, np.ones_like(y))
    h = 1e-6
    fd = (numerics.sigmoid(x + h) - numerics.sigmoid(x - h)) / (2 * h)
    assert np.allclose(d, fd, atol=1e-9)


def test_softmax_rows_sum_to_one():
    logits = normal_array(5, (4, 10)) * 3
    p = numerics.softmax(logits)
    assert np.allclose(p.sum(axis=1), 1.0)
    assert np.all(p > 0)


def test_cross_entropy_uniform_logits_is_log10():
    logits = np.zeros((2, 10))
    losses, grads = numerics.softmax_cross_entropy(logits, np.array([3, 7]))
    assert np.allclose(losses, np.log(10.0))
    # gradient rows: 0.1 everywhere except -0.9 at the label
    assert grads[0, 3] == pytest.approx(-0.9)
    assert grads[0, 0] == pytest.approx(0.1)


def test_cross_entropy_gradient_matches_fd():
    logits = normal_array(8, (3, 5))
    labels = np.array([0, 4, 2])
    _, grads = numerics.softmax_cross_entropy(logits, labels)
    h = 1e-6
    for b, c in [(0, 0), (1, 4), (2, 1)]:
        lp = logits.copy()
        lp[b, c] += h
        up = numerics.softmax_cross_entropy(lp, labels)[0][b]
        lp[b, c] -= 2 * h
        down = numerics.softmax_cross_entropy(lp, labels)[0][b]
        assert (up - down) / (2 * h) == pytest.approx(grads[b, c], abs=1e-8)


def test_cross_entropy_shape_checks():
    with pytest.raises(ShapeMismatch):
        numerics.softmax_cross_entropy(np.zeros((2, 10)), np.array([0, 1, 2]))
    with pytest.raises(ShapeMismatch):
        numerics.softmax_cross_entropy(np.zeros((2, 10)), np.array([0, 10]))


def test_mse_value_and_gradient():
    pred = np.array([[1.0, 2.0], [3.0, 4.0]])
    target = np.zeros((2, 2))
    loss, grad = numerics.mse(pred, target)
    assert loss == pytest.approx((1 + 4 + 9 + 16) / 4)
    assert np.allclose(grad, 2 * pred / 4)
    with pytest.raises(ShapeMismatch):
        numerics.mse(pred, np.zeros(3))


def test_fc_forward_backward_shapes_and_fd():
    x = normal_array(1, (4, 6))
    w = normal_array(2, (3, 6))
    b = normal_array(3, (3,))
    y = numerics.fc_forward(x, w, b)
    assert y.shape == (4, 3)
    d_out = normal_array(4, (4, 3))
    d_x, d_w, d_b = numerics.fc_backward(x, w, d_out)
    assert d_x.shape == x.shape and d_w.shape == w.shape and d_b.shape == b.shape

    def loss_of():
        return float(np.sum(numerics.fc_forward(x, w, b) * d_out))

    h = 1e-6
    for arr, grad, idx in ((x, d_x, 5), (w, d_w, 7), (b, d_b, 1)):
        orig = arr.flat[idx]
        arr.flat[idx] = orig + h
        up = loss_of()
        arr.flat[idx] = orig - h
        down = loss_of()
        arr.flat[idx] = orig
        assert (up - down) / (2 * h) == pytest.approx(grad.flat[idx], rel=1e-6, abs=1e-9)


def test_adam_matches_reference_step():
    # One step from zero moments: m_hat = g, v_hat = g^2, update = -lr*g/(|g|+eps)
    p = np.array([1.0, -2.0])
    g = np.array([0.5, -0.1])
    state = numerics.adam_init([p])
    numerics.adam_step([p], [g], state, lr=0.1)
    expected = np.array([1.0, -2.0]) - 0.1 * g / (np.abs(g) + 1e-8)
    assert np.allclose(p, expected, atol=1e-12)


def test_adam_converges_on_quadratic():
    p = np.array([5.0])
    state = numerics.adam_init([p])
    for _ in range(400):
        numerics.adam_step([p], [2 * p], state, lr=0.05)
    assert abs(p[0]) < 1e-2


def test_adam_shape_checks():
    p = np.zeros(3)
    state = numerics.adam_init([p])
    with pytest.raises(ShapeMismatch):
        numerics.adam_step([p], [np.zeros(4)], state, lr=0.1)


@given(st.integers(min_value=0, max_value=10**6))
@settings(max_examples=25, deadline=None)
def test_softmax_invariant_to_shift(seed):
    logits = uniform_array(seed, (2, 6), -5, 5)
    assert np.allclose(
        numerics.softmax(logits), numerics.softmax(logits + 123.0), atol=1e-12
    )
