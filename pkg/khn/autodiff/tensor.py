"""Reverse-mode automatic differentiation core: tensors, functions and tapes.

A Tensor wraps a float64 numpy array. Applying a Function to tensors that
require gradients records the function, its saved context and its inputs on
the output tensor; the graph reachable from a scalar loss is the computation
tape that `backward` walks in reverse topological order.
"""

from typing import Any, Iterator, Optional, Sequence

import numpy as np

from khn.errors import NumericError, ShapeError


class Context:
    """Values a Function saves during forward for use in backward."""

    def __init__(self):
        self.saved: tuple = ()
        self.needs_input_grad: tuple[bool, ...] = ()

    def save_for_backward(self, *values: Any):
        self.saved = values


class Tensor:
    """A differentiable n-dimensional float64 array."""

    def __init__(self, data: Any, requires_grad: bool = False, name: Optional[str] = None):
        """
        Create a tensor holding a copy of data.

        Args:
            data: Array-like of real values
            requires_grad: Whether gradients should be accumulated into this tensor
            name: Optional label used in diagnostics
        """
        array = np.array(data, dtype=np.float64)
        _check_finite(array, "tensor construction")
        self.data = array
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.name = name
        self._node: Optional[tuple[type["Function"], Context, tuple["Tensor", ...]]] = None

    @classmethod
    def _wrap(cls, data: np.ndarray, requires_grad: bool = False) -> "Tensor":
        tensor = cls.__new__(cls)
        tensor.data = data
        tensor.grad = None
        tensor.requires_grad = requires_grad
        tensor.name = None
        tensor._node = None
        return tensor

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.data.shape)

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def is_leaf(self) -> bool:
        return self._node is None

    @property
    def T(self) -> "Tensor":  # noqa: N802
        return self.transpose()

    def item(self) -> float:
        if self.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        """Copy of the underlying data."""
        return self.data.copy()

    def detach(self) -> "Tensor":
        """Tensor sharing no graph history with this one."""
        return Tensor._wrap(self.data.copy())

    def zero_grad(self):
        self.grad = None

    def backward(self):
        """Backpropagate from this scalar tensor into all reachable leaves."""
        backward(self)

    def __repr__(self) -> str:
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{label})"

    # Arithmetic operators are registered by khn.autodiff.ops.


class Function:
    """Base class of differentiable operations.

    Subclasses implement static ``forward(ctx, *arrays, **kwargs)`` returning a
    numpy array and ``backward(ctx, grad)`` returning one gradient (or None)
    per tensor input.
    """

    @staticmethod
    def forward(ctx: Context, *args: Any, **kwargs: Any) -> np.ndarray:
        raise NotImplementedError

    @staticmethod
    def backward(ctx: Context, grad: np.ndarray) -> Any:
        raise NotImplementedError

    @classmethod
    def apply(cls, *inputs: Any, **kwargs: Any) -> Tensor:
        tensors = tuple(x if isinstance(x, Tensor) else Tensor(x) for x in inputs)
        ctx = Context()
        ctx.needs_input_grad = tuple(t.requires_grad for t in tensors)
        out_data = np.asarray(cls.forward(ctx, *[t.data for t in tensors], **kwargs), dtype=np.float64)
        _check_finite(out_data, cls.__name__)
        requires_grad = any(ctx.needs_input_grad)
        out = Tensor._wrap(out_data, requires_grad=requires_grad)
        if requires_grad:
            out._node = (cls, ctx, tensors)
        return out


class ComputationTape:
    """Topologically ordered record of the operations behind a tensor.

    Every node appears after all of its inputs; only tensors that require
    gradients are recorded.
    """

    def __init__(self, nodes: list[Tensor]):
        self.nodes = nodes

    @classmethod
    def record(cls, root: Tensor) -> "ComputationTape":
        order: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            if node._node is not None:
                for parent in node._node[2]:
                    if parent.requires_grad and id(parent) not in visited:
                        stack.append((parent, False))
        return cls(order)

    def __len__(self) -> int:
        return len(self.nodes)

    def __iter__(self) -> Iterator[Tensor]:
        return iter(self.nodes)


def backward(loss: Tensor, tape: Optional[ComputationTape] = None):
    """
    Accumulate d(loss)/d(leaf) into every reachable leaf tensor's grad.

    Args:
        loss: Single-element tensor produced by recorded operations
        tape: Pre-recorded tape of loss (recorded on demand if omitted)
    """
    if loss.size != 1:
        raise ShapeError(f"backward() needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    tape = tape if tape is not None else ComputationTape.record(loss)

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(tape.nodes):
        grad = grads.pop(id(node), None)
        if grad is None:
            continue
        if node._node is None:
            node.grad = grad.copy() if node.grad is None else node.grad + grad
            continue
        fn, ctx, inputs = node._node
        input_grads = fn.backward(ctx, grad)
        if not isinstance(input_grads, tuple):
            input_grads = (input_grads,)
        for tensor, input_grad in zip(inputs, input_grads):
            if input_grad is None or not tensor.requires_grad:
                continue
            input_grad = unbroadcast(np.asarray(input_grad, dtype=np.float64), tensor.data.shape)
            previous = grads.get(id(tensor))
            grads[id(tensor)] = input_grad if previous is None else previous + input_grad


def unbroadcast(grad: np.ndarray, shape: Sequence[int]) -> np.ndarray:
    """Sum grad over the axes along which an input of `shape` was broadcast."""
    shape = tuple(shape)
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


def zero_grad(params: Sequence[Tensor]):
    for param in params:
        param.grad = None


def _check_finite(array: np.ndarray, where: str):
    if not np.all(np.isfinite(array)):
        raise NumericError(f"{where} produced non-finite values")
