"""Differentiable operations.

Each operation is a Function subclass with explicit forward and backward
rules; the module-level helpers below are the public entry points and are
also registered as Tensor operators.
"""

from typing import Optional, Sequence, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from khn.autodiff.tensor import Context, Function, Tensor
from khn.errors import LabelIndexError, NumericDomainError, ShapeError

Operand = Union[Tensor, np.ndarray, float, int]


def _broadcast_shape(a: np.ndarray, b: np.ndarray, op: str) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError as exc:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from exc


# Elementwise binary


class Add(Function):
    @staticmethod
    def forward(ctx: Context, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        _broadcast_shape(a, b, "add")
        return a + b

    @staticmethod
    def backward(ctx: Context, grad: np.ndarray):
        return grad, grad


class Sub(Function):
    @staticmethod
    def forward(ctx: Context, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        _broadcast_shape(a, b, "sub")
        return a - b

    @staticmethod
    def backward(ctx: Context, grad: np.ndarray):
        return grad, -grad


class Mul(Function):
    @staticmethod
    def forward(ctx: Context, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        _broadcast_shape(a, b, "mul")
        ctx.save_for_backward(a, b)
        return a * b

    @staticmethod
    def backward(ctx: Context, grad: np.ndarray):
        a, b = ctx.saved
        return grad * b, grad * a


class Div(Function):
    @staticmethod
    def forward(ctx: Context, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        _broadcast_shape(a, b, "div")
        if np.any(b == 0.0):
            raise NumericDomainError("div: division by zero")
        ctx.save_for_backward(a, b)
        return a / b

    @staticmethod
    def backward(ctx: Context, grad: np.ndarray):
        a, b = ctx.saved
        return grad / b, -grad * a / (b * b)


# Elementwise unary


class Neg(Function):
    @staticmethod
    def forward(ctx: Context, x: np.ndarray) -> np.ndarray:
        return -x

    @staticmethod
    def backward(ctx: Context, grad: np.ndarray):
        return -grad


class Pow(Function):
    @staticmethod
    def forward(ctx: Context, x: np.ndarray, exponent: float = 2.0) -> np.ndarray:
        ctx.save_for_backward(x, exponent)
        return x**exponent

    @staticmethod
    def backward(ctx: Context, grad: np.ndarray):
        x, exponent = ctx.saved
        return grad * exponent * x ** (exponent - 1)


class ReLU(Function):
    @staticmethod
    def forward(ctx: Context, x: np.ndarray) -> np.ndarray:
        ctx.save_for_backward(x)
        return np.maximum(x, 0.0)

    @staticmethod
    def backward(ctx: Context, grad: np.ndarray):
        (x,) = ctx.saved
        return grad * (x > 0.0)


class Exp(Function):
    @staticmethod
    def forward(ctx: Context, x: np.ndarray) -> np.ndarray:
        out = np.exp(x)
        ctx.save_for_backward(out)
        return out

    @staticmethod
    def backward(ctx: Context, grad: np.ndarray):
        (out,) = ctx.saved
        return grad * out


class Log(Function):
    @staticmethod
    def forward(ctx: Context, x: np.ndarray) -> np.ndarray:
        if np.any(x <= 0.0):
            raise NumericDomainError("log: argument must be positive")
        ctx.save_for_backward(x)
        return np.log(x)

    @staticmethod
    def backward(ctx: Context, grad: np.ndarray):
        (x,) = ctx.saved
        return grad / x


class Sqrt(Function):
    @staticmethod
    def forward(ctx: Context, x: np.ndarray) -> np.ndarray:
        if np.any(x < 0.0):
            raise NumericDomainError("sqrt: argument must be non-negative")
        out = np.sqrt(x)
        ctx.save_for_backward(out)
        return out

    @staticmethod
    def backward(ctx: Context, grad: np.ndarray):
        (out,) = ctx.saved
        # subgradient 0 at the origin
        return np.divide(grad, 2.0 * out, out=np.zeros_like(out), where=out > 0.0)


class ClampMin(Function):
    @staticmethod
    def forward(ctx: Context, x: np.ndarray, floor: float = 0.0) -> np.ndarray:
        ctx.save_for_backward(x, floor)
        return np.maximum(x, floor)

    @staticmethod
    def backward(ctx: Context, grad: np.ndarray):
        x, floor = ctx.saved
        return grad * (x > floor)


# Linear algebra and shape


class MatMul(Function):
    @staticmethod
    def forward(ctx: Context, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        if a.ndim != 2 or b.ndim != 2:
            raise ShapeError(f"matmul needs rank-2 operands, got {a.shape} and {b.shape}")
        if a.shape[1] != b.shape[0]:
            raise ShapeError(f"matmul: inner dimensions differ, {a.shape} x {b.shape}")
        ctx.save_for_backward(a, b)
        return a @ b

    @staticmethod
    def backward(ctx: Context, grad: np.ndarray):
        a, b = ctx.saved
        return grad @ b.T, a.T @ grad


class Sum(Function):
    @staticmethod
    def forward(
        ctx: Context, x: np.ndarray, axis: Optional[Union[int, tuple]] = None, keepdims: bool = False
    ) -> np.ndarray:
        ctx.save_for_backward(x.shape, axis, keepdims)
        return np.sum(x, axis=axis, keepdims=keepdims)

    @staticmethod
    def backward(ctx: Context, grad: np.ndarray):
        shape, axis, keepdims = ctx.saved
        if axis is not None and not keepdims:
            grad = np.expand_dims(grad, axis)
        return np.broadcast_to(grad, shape).copy()


class Reshape(Function):
    @staticmethod
    def forward(ctx: Context, x: np.ndarray, shape: tuple = ()) -> np.ndarray:
        try:
            out = x.reshape(shape)
        except ValueError as exc:
            raise ShapeError(f"reshape: cannot view {x.shape} as {shape}") from exc
        ctx.save_for_backward(x.shape)
        return out

    @staticmethod
    def backward(ctx: Context, grad: np.ndarray):
        (shape,) = ctx.saved
        return grad.reshape(shape)


class Transpose(Function):
    @staticmethod
    def forward(ctx: Context, x: np.ndarray, axes: Optional[tuple] = None) -> np.ndarray:
        ctx.save_for_backward(axes, x.ndim)
        return np.transpose(x, axes)

    @staticmethod
    def backward(ctx: Context, grad: np.ndarray):
        axes, ndim = ctx.saved
        if axes is None:
            return np.transpose(grad)
        return np.transpose(grad, np.argsort(axes))


class TakeRows(Function):
    @staticmethod
    def forward(ctx: Context, x: np.ndarray, indices: Sequence[int] = ()) -> np.ndarray:
        index = np.asarray(indices, dtype=np.int64)
        ctx.save_for_backward(x.shape, index)
        return x[index]

    @staticmethod
    def backward(ctx: Context, grad: np.ndarray):
        shape, index = ctx.saved
        out = np.zeros(shape)
        np.add.at(out, index, grad)
        return out


# Classification


class Softmax(Function):
    @staticmethod
    def forward(ctx: Context, x: np.ndarray, axis: int = -1) -> np.ndarray:
        shifted = np.exp(x - np.max(x, axis=axis, keepdims=True))
        out = shifted / np.sum(shifted, axis=axis, keepdims=True)
        ctx.save_for_backward(out, axis)
        return out

    @staticmethod
    def backward(ctx: Context, grad: np.ndarray):
        out, axis = ctx.saved
        return out * (grad - np.sum(grad * out, axis=axis, keepdims=True))


class SoftmaxCrossEntropy(Function):
    @staticmethod
    def forward(ctx: Context, logits: np.ndarray, labels: Sequence[int] = ()) -> np.ndarray:
        index = np.asarray(labels, dtype=np.int64)
        batch = logits.shape[0]
        shifted = logits - np.max(logits, axis=1, keepdims=True)
        exp = np.exp(shifted)
        total = np.sum(exp, axis=1)
        log_sum = np.log(total)
        picked = shifted[np.arange(batch), index]
        ctx.save_for_backward(exp / total[:, None], index)
        return np.asarray(np.mean(log_sum - picked))

    @staticmethod
    def backward(ctx: Context, grad: np.ndarray):
        probs, index = ctx.saved
        batch = probs.shape[0]
        delta = probs.copy()
        delta[np.arange(batch), index] -= 1.0
        return grad * delta / batch


# Convolutional backbone primitives


class Conv2d(Function):
    """3x3 convolution, stride 1, zero padding 1 (NCHW layout)."""

    @staticmethod
    def forward(ctx: Context, x: np.ndarray, weight: np.ndarray) -> np.ndarray:
        if x.ndim != 4 or weight.ndim != 4 or weight.shape[2:] != (3, 3):
            raise ShapeError(f"conv2d: expected [B,C,H,W] x [O,C,3,3], got {x.shape} x {weight.shape}")
        if x.shape[1] != weight.shape[1]:
            raise ShapeError(f"conv2d: {x.shape[1]} input channels, weight expects {weight.shape[1]}")
        batch, channels, height, width = x.shape
        out_channels = weight.shape[0]
        padded = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
        windows = sliding_window_view(padded, (3, 3), axis=(2, 3))  # [B,C,H,W,3,3]
        cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(batch * height * width, channels * 9)
        flat_weight = weight.reshape(out_channels, channels * 9)
        out = cols @ flat_weight.T
        ctx.save_for_backward(cols, flat_weight, x.shape, weight.shape)
        return out.reshape(batch, height, width, out_channels).transpose(0, 3, 1, 2)

    @staticmethod
    def backward(ctx: Context, grad: np.ndarray):
        cols, flat_weight, x_shape, w_shape = ctx.saved
        batch, channels, height, width = x_shape
        grad_rows = grad.transpose(0, 2, 3, 1).reshape(-1, w_shape[0])
        grad_weight = (grad_rows.T @ cols).reshape(w_shape)
        grad_cols = (grad_rows @ flat_weight).reshape(batch, height, width, channels, 3, 3)
        grad_padded = np.zeros((batch, channels, height + 2, width + 2))
        for i in range(3):
            for j in range(3):
                grad_padded[:, :, i : i + height, j : j + width] += grad_cols[:, :, :, :, i, j].transpose(
                    0, 3, 1, 2
                )
        return grad_padded[:, :, 1:-1, 1:-1], grad_weight


class MaxPool2d(Function):
    """2x2 max pooling with stride 2; ties route the gradient to the first maximum."""

    @staticmethod
    def forward(ctx: Context, x: np.ndarray) -> np.ndarray:
        if x.ndim != 4 or x.shape[2] % 2 or x.shape[3] % 2:
            raise ShapeError(f"max_pool2d needs [B,C,H,W] with even H and W, got {x.shape}")
        batch, channels, height, width = x.shape
        windows = (
            x.reshape(batch, channels, height // 2, 2, width // 2, 2)
            .transpose(0, 1, 2, 4, 3, 5)
            .reshape(batch, channels, height // 2, width // 2, 4)
        )
        argmax = np.argmax(windows, axis=-1)
        ctx.save_for_backward(argmax, x.shape)
        return np.take_along_axis(windows, argmax[..., None], axis=-1)[..., 0]

    @staticmethod
    def backward(ctx: Context, grad: np.ndarray):
        argmax, shape = ctx.saved
        batch, channels, height, width = shape
        windows = np.zeros((batch, channels, height // 2, width // 2, 4))
        np.put_along_axis(windows, argmax[..., None], grad[..., None], axis=-1)
        return (
            windows.reshape(batch, channels, height // 2, width // 2, 2, 2)
            .transpose(0, 1, 2, 4, 3, 5)
            .reshape(shape)
        )


# Public helpers


def add(a: Operand, b: Operand) -> Tensor:
    return Add.apply(a, b)


def sub(a: Operand, b: Operand) -> Tensor:
    return Sub.apply(a, b)


def mul(a: Operand, b: Operand) -> Tensor:
    return Mul.apply(a, b)


def div(a: Operand, b: Operand) -> Tensor:
    return Div.apply(a, b)


def neg(x: Operand) -> Tensor:
    return Neg.apply(x)


def relu(x: Operand) -> Tensor:
    return ReLU.apply(x)


def exp(x: Operand) -> Tensor:
    return Exp.apply(x)


def log(x: Operand) -> Tensor:
    return Log.apply(x)


def sqrt(x: Operand) -> Tensor:
    return Sqrt.apply(x)


def clamp_min(x: Operand, floor: float) -> Tensor:
    return ClampMin.apply(x, floor=float(floor))


_ELEMENTWISE = {
    "add": Add,
    "sub": Sub,
    "mul": Mul,
    "div": Div,
    "relu": ReLU,
    "exp": Exp,
    "log": Log,
    "sqrt": Sqrt,
}


def elementwise(op_kind: str, *operands: Operand) -> Tensor:
    """Apply an elementwise operation by name (add, sub, mul, div, relu, exp, log, sqrt)."""
    if op_kind not in _ELEMENTWISE:
        raise ValueError(f"unknown elementwise op {op_kind!r}")
    return _ELEMENTWISE[op_kind].apply(*operands)


def matmul(a: Operand, b: Operand) -> Tensor:
    return MatMul.apply(a, b)


def sum(x: Operand, axis: Optional[Union[int, tuple]] = None, keepdims: bool = False) -> Tensor:
    return Sum.apply(x, axis=axis, keepdims=keepdims)


def mean(x: Tensor, axis: Optional[Union[int, tuple]] = None, keepdims: bool = False) -> Tensor:
    if axis is None:
        count = x.size
    else:
        axes = (axis,) if isinstance(axis, int) else axis
        count = int(np.prod([x.shape[a] for a in axes]))
    return Sum.apply(x, axis=axis, keepdims=keepdims) / float(count)


def reshape(x: Operand, shape: Sequence[int]) -> Tensor:
    return Reshape.apply(x, shape=tuple(shape))


def transpose(x: Operand, axes: Optional[Sequence[int]] = None) -> Tensor:
    return Transpose.apply(x, axes=None if axes is None else tuple(axes))


def take_rows(x: Operand, indices: Sequence[int]) -> Tensor:
    return TakeRows.apply(x, indices=tuple(int(i) for i in indices))


def softmax(x: Operand, axis: int = -1) -> Tensor:
    return Softmax.apply(x, axis=axis)


def softmax_cross_entropy(logits: Tensor, labels: Sequence[int]) -> Tensor:
    """Mean negative log-likelihood of labels under softmax(logits)."""
    if logits.ndim != 2:
        raise ShapeError(f"softmax_cross_entropy needs [batch, classes] logits, got {logits.shape}")
    batch, classes = logits.shape
    if batch < 1:
        raise ShapeError("softmax_cross_entropy needs a non-empty batch")
    if len(labels) != batch:
        raise ShapeError(f"{len(labels)} labels for a batch of {batch}")
    for label in labels:
        if not 0 <= int(label) < classes:
            raise LabelIndexError(f"label {label} outside [0, {classes})")
    return SoftmaxCrossEntropy.apply(logits, labels=tuple(int(y) for y in labels))


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """x @ weight.T + bias, with weight stored as [out_features, in_features]."""
    out = matmul(x, transpose(weight))
    return out + bias if bias is not None else out


def conv2d(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    out = Conv2d.apply(x, weight)
    if bias is not None:
        out = out + reshape(bias, (1, bias.shape[0], 1, 1))
    return out


def max_pool2d(x: Tensor) -> Tensor:
    return MaxPool2d.apply(x)


# Operator registration


def _register():
    Tensor.__add__ = lambda self, other: Add.apply(self, other)
    Tensor.__radd__ = lambda self, other: Add.apply(other, self)
    Tensor.__sub__ = lambda self, other: Sub.apply(self, other)
    Tensor.__rsub__ = lambda self, other: Sub.apply(other, self)
    Tensor.__mul__ = lambda self, other: Mul.apply(self, other)
    Tensor.__rmul__ = lambda self, other: Mul.apply(other, self)
    Tensor.__truediv__ = lambda self, other: Div.apply(self, other)
    Tensor.__rtruediv__ = lambda self, other: Div.apply(other, self)
    Tensor.__neg__ = lambda self: Neg.apply(self)
    Tensor.__pow__ = lambda self, exponent: Pow.apply(self, exponent=float(exponent))
    Tensor.__matmul__ = lambda self, other: MatMul.apply(self, other)
    Tensor.relu = relu
    Tensor.exp = exp
    Tensor.log = log
    Tensor.sqrt = sqrt
    Tensor.sum = sum
    Tensor.mean = mean
    Tensor.reshape = lambda self, *shape: reshape(
        self, shape[0] if len(shape) == 1 and isinstance(shape[0], (tuple, list)) else shape
    )
    Tensor.transpose = transpose


_register()
