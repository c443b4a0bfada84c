"""Gradient-based optimizers over autodiff tensors."""

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from khn.autodiff.tensor import Tensor
from khn.errors import OptimizerStateError


@dataclass
class AdamState:
    """Moment estimates and step counter of an Adam optimizer."""

    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    first_moment: list[np.ndarray] = field(default_factory=list)
    second_moment: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(
        cls, params: Sequence[Tensor], beta1: float = 0.9, beta2: float = 0.999, epsilon: float = 1e-8
    ) -> "AdamState":
        return cls(
            beta1=beta1,
            beta2=beta2,
            epsilon=epsilon,
            first_moment=[np.zeros_like(p.data) for p in params],
            second_moment=[np.zeros_like(p.data) for p in params],
        )


def _require_grads(params: Sequence[Tensor]):
    for index, param in enumerate(params):
        if param.grad is None:
            label = param.name or f"#{index}"
            raise OptimizerStateError(f"parameter {label} has no gradient")


def adam_step(params: Sequence[Tensor], state: AdamState, learning_rate: float):
    """
    One bias-corrected Adam update, in place; gradients are reset afterwards.

    Args:
        params: Parameters with populated grads
        state: Moment buffers matching params
        learning_rate: Step size
    """
    _require_grads(params)
    if len(state.first_moment) != len(params):
        raise OptimizerStateError(
            f"optimizer state tracks {len(state.first_moment)} parameters, got {len(params)}"
        )

    state.step_count += 1
    bias1 = 1.0 - state.beta1**state.step_count
    bias2 = 1.0 - state.beta2**state.step_count

    for param, m, v in zip(params, state.first_moment, state.second_moment):
        if m.shape != param.data.shape:
            raise OptimizerStateError(f"moment shape {m.shape} does not match {param.shape}")
        grad = param.grad
        m *= state.beta1
        m += (1.0 - state.beta1) * grad
        v *= state.beta2
        v += (1.0 - state.beta2) * (grad * grad)
        param.data -= learning_rate * (m / bias1) / (np.sqrt(v / bias2) + state.epsilon)
        param.grad = None


def sgd_step(params: Sequence[Tensor], learning_rate: float):
    """Plain gradient descent: p <- p - lr * grad; gradients are reset afterwards."""
    _require_grads(params)
    for param in params:
        param.data -= learning_rate * param.grad
        param.grad = None


class Adam:
    """Adam optimizer bound to a fixed parameter list."""

    def __init__(
        self,
        params: Sequence[Tensor],
        learning_rate: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        epsilon: float = 1e-8,
    ):
        self.params = list(params)
        self.learning_rate = learning_rate
        self.state = AdamState.for_params(self.params, beta1, beta2, epsilon)

    def step(self):
        adam_step(self.params, self.state, self.learning_rate)

    def zero_grad(self):
        for param in self.params:
            param.grad = None


class SGD:
    """Plain gradient descent, used where an exact update rule is needed."""

    def __init__(self, params: Sequence[Tensor], learning_rate: float = 1e-3):
        self.params = list(params)
        self.learning_rate = learning_rate

    def step(self):
        sgd_step(self.params, self.learning_rate)

    def zero_grad(self):
        for param in self.params:
            param.grad = None
