"""Minimal reverse-mode automatic differentiation."""

from khn.autodiff import ops
from khn.autodiff.gradcheck import check_gradients, finite_difference_gradient
from khn.autodiff.optim import SGD, Adam, AdamState, adam_step, sgd_step
from khn.autodiff.tensor import ComputationTape, Context, Function, Tensor, backward, zero_grad

__all__ = [
    "Adam",
    "AdamState",
    "ComputationTape",
    "Context",
    "Function",
    "SGD",
    "Tensor",
    "adam_step",
    "backward",
    "check_gradients",
    "finite_difference_gradient",
    "ops",
    "sgd_step",
    "zero_grad",
]
