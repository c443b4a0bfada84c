"""Finite-difference gradient oracle."""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from khn.autodiff.tensor import Tensor, backward
from khn.errors import NumericError

logger = logging.getLogger(__name__)

RELATIVE_ERROR_FLOOR = 1e-5


def finite_difference_gradient(fn: Callable[[Tensor], Tensor], point: Tensor, h: float = 1e-5) -> Tensor:
    """
    Central-difference gradient of a scalar function at point.

    The point's data is perturbed in place one coordinate at a time and
    restored afterwards.

    Args:
        fn: Deterministic map from the tensor to a scalar tensor
        point: Tensor at which to differentiate
        h: Step size (> 0)

    Returns:
        Tensor of the point's shape holding (fn(x+h·e_i) - fn(x-h·e_i)) / 2h
    """
    if h <= 0:
        raise ValueError("finite-difference step h must be positive")
    flat = point.data.reshape(-1)
    grad = np.zeros_like(flat)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + h
        plus = _scalar(fn(point))
        flat[i] = original - h
        minus = _scalar(fn(point))
        flat[i] = original
        grad[i] = (plus - minus) / (2.0 * h)
    return Tensor(grad.reshape(point.shape))


def _scalar(value: Tensor) -> float:
    result = value.item()
    if not math.isfinite(result):
        raise NumericError("finite-difference evaluation produced a non-finite value")
    return result


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    """Coordinate-wise |a - n| / max(|a|, |n|, floor)."""
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), RELATIVE_ERROR_FLOOR)
    return np.abs(analytic - numeric) / scale


@dataclass
class GroupCheck:
    """Gradient comparison for one named parameter group."""

    group: str
    parameter_count: int
    max_relative_error: float

    @property
    def skipped(self) -> bool:
        return self.parameter_count == 0

    def passed(self, tolerance: float) -> bool:
        return self.skipped or self.max_relative_error < tolerance


def check_gradients(
    loss_fn: Callable[[], Tensor],
    groups: Mapping[str, Sequence[Tensor]],
    h: float = 1e-5,
) -> list[GroupCheck]:
    """
    Compare backward() against central differences for every parameter group.

    Args:
        loss_fn: Rebuilds the scalar loss from the current parameter values
        groups: Group name -> parameter tensors
        h: Finite-difference step

    Returns:
        One GroupCheck per group, in mapping order
    """
    params = [p for tensors in groups.values() for p in tensors]
    for param in params:
        param.grad = None
    backward(loss_fn())
    analytic = {id(p): (p.grad.copy() if p.grad is not None else np.zeros_like(p.data)) for p in params}
    for param in params:
        param.grad = None

    results = []
    for group, tensors in groups.items():
        worst = 0.0
        count = 0
        for param in tensors:
            numeric = finite_difference_gradient(lambda _: loss_fn(), param, h).data
            errors = relative_error(analytic[id(param)], numeric)
            count += param.size
            if errors.size:
                worst = max(worst, float(errors.max()))
        logger.debug("gradcheck group %s: %d parameters, max rel. error %.3e", group, count, worst)
        results.append(GroupCheck(group=group, parameter_count=count, max_relative_error=worst))
    return results
