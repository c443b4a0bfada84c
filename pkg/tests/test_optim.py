"""Test Adam and plain gradient descent."""

import numpy as np
import pytest

from khn.autodiff import SGD, Adam, AdamState, Tensor, adam_step, backward, ops, sgd_step
from khn.errors import OptimizerStateError


def _scalar_param(value: float, grad: float) -> Tensor:
    param = Tensor([value], requires_grad=True, name="w")
    param.grad = np.array([grad])
    return param


def test_adam_first_step_moves_by_learning_rate():
    """Test Adam's first step moves each parameter by the learning rate."""
    param = _scalar_param(1.0, 1.0)
    state = AdamState.for_params([param])
    adam_step([param], state, learning_rate=0.1)
    assert param.data[0] == pytest.approx(0.9, abs=1e-7)
    assert state.step_count == 1
    assert param.grad is None


def test_adam_zero_grad_leaves_param_and_decays_moments():
    """Test a zero gradient with a zero first moment leaves the parameter unchanged."""
    param = _scalar_param(1.0, 1.0)
    state = AdamState.for_params([param])
    adam_step([param], state, learning_rate=0.1)
    before = param.data.copy()
    m1, v1 = state.first_moment[0].copy(), state.second_moment[0].copy()

    param.grad = np.zeros(1)
    state.first_moment[0][...] = 0.0
    adam_step([param], state, learning_rate=0.1)
    np.testing.assert_array_equal(param.data, before)
    np.testing.assert_allclose(state.second_moment[0], 0.999 * v1)
    assert abs(m1[0]) > 0


def test_adam_moments_decay_under_zero_grad():
    """Test Adam moments decay when the gradient is zero."""
    param = _scalar_param(0.0, 2.0)
    state = AdamState.for_params([param])
    adam_step([param], state, learning_rate=0.0)
    m1, v1 = state.first_moment[0][0], state.second_moment[0][0]
    param.grad = np.zeros(1)
    adam_step([param], state, learning_rate=0.0)
    assert state.first_moment[0][0] == pytest.approx(0.9 * m1)
    assert state.second_moment[0][0] == pytest.approx(0.999 * v1)
    assert param.data[0] == 0.0


def test_adam_monotone_against_gradient_sign():
    """Test Adam moves against the gradient sign."""
    param = _scalar_param(1.0, 0.5)
    state = AdamState.for_params([param])
    values = [param.data[0]]
    for _ in range(2):
        param.grad = np.array([0.5])
        adam_step([param], state, learning_rate=0.01)
        values.append(param.data[0])
    assert values[0] > values[1] > values[2]
    assert state.step_count == 2


def test_adam_missing_grad():
    """Test Adam refuses parameters without a gradient."""
    param = Tensor([1.0], requires_grad=True, name="orphan")
    with pytest.raises(OptimizerStateError, match="orphan"):
        adam_step([param], AdamState.for_params([param]), 0.1)


def test_adam_state_mismatch():
    """Test Adam state must match the parameter shapes."""
    a = _scalar_param(1.0, 1.0)
    b = _scalar_param(2.0, 1.0)
    with pytest.raises(OptimizerStateError):
        adam_step([a, b], AdamState.for_params([a]), 0.1)


def test_adam_minimizes_quadratic():
    """Test Adam drives a quadratic to its minimum."""
    w = Tensor([3.0, -2.0], requires_grad=True)
    optimizer = Adam([w], learning_rate=0.1)
    for _ in range(500):
        optimizer.zero_grad()
        backward(ops.sum(w * w))
        optimizer.step()
    assert np.all(np.abs(w.data) < 0.1)


def test_sgd_exact_update():
    """Test SGD subtracts learning rate times gradient."""
    w = Tensor([1.0, -2.0], requires_grad=True)
    backward(ops.sum(w * w))
    grad = w.grad.copy()
    before = w.data.copy()
    SGD([w], learning_rate=0.25).step()
    np.testing.assert_allclose(w.data, before - 0.25 * grad, atol=1e-12)
    assert w.grad is None


def test_sgd_missing_grad():
    """Test SGD refuses parameters without a gradient."""
    with pytest.raises(OptimizerStateError):
        sgd_step([Tensor([1.0], requires_grad=True)], 0.1)
