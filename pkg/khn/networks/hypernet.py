"""Hypernetwork H (neck + per-parameter heads) and the generated target network T."""

from dataclasses import dataclass

import numpy as np

from khn.autodiff import ops
from khn.autodiff.tensor import Tensor
from khn.engine.rng import SeededRNG
from khn.errors import ShapeError
from khn.models.schemas import HypernetConfig, TargetShape
from khn.networks.layers import ParamDict, init_mlp, mlp_forward

HYPERNET_STREAM = 401


@dataclass
class TargetParams:
    """Generated classifier weights θ_T in enumeration order."""

    names: list[str]
    tensors: list[Tensor]

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[self.names.index(name)]

    def __len__(self) -> int:
        return len(self.tensors)

    def shapes(self) -> list[tuple[int, ...]]:
        return [t.shape for t in self.tensors]


def _head_prefix(tensor_name: str) -> str:
    return f"hypernet.heads.{tensor_name}"


def init_hypernet(config: HypernetConfig, target: TargetShape, seed: int) -> ParamDict:
    """θ_H: neck layers first, then one head per target tensor in enumeration order."""
    rng = SeededRNG(seed, HYPERNET_STREAM)
    params: ParamDict = {}
    kernel_size = target.input_dim * target.input_dim
    init_mlp(params, "hypernet.neck", [kernel_size] + [config.hidden_dim] * config.neck_depth, rng)
    neck_out = config.hidden_dim if config.neck_depth > 0 else kernel_size
    for name, shape in target.parameter_shapes():
        sizes = [neck_out] + [config.hidden_dim] * (config.head_depth - 1) + [int(np.prod(shape))]
        init_mlp(params, _head_prefix(name), sizes, rng)
    return params


def final_head_layer_names(config: HypernetConfig, target: TargetShape) -> list[str]:
    last = config.head_depth - 1
    names = []
    for name, _ in target.parameter_shapes():
        names.extend([f"{_head_prefix(name)}.{last}.weight", f"{_head_prefix(name)}.{last}.bias"])
    return names


def flatten_kernel(kernel: Tensor) -> Tensor:
    """Row-major flattening of a square K_{S,S} into a vector of length R²."""
    if kernel.ndim != 2 or kernel.shape[0] != kernel.shape[1]:
        raise ShapeError(f"kernel matrix must be square, got {kernel.shape}")
    return ops.reshape(kernel, (kernel.size,))


def generate_target_params(
    config: HypernetConfig, target: TargetShape, params: ParamDict, kernel_flat: Tensor
) -> TargetParams:
    """
    Run the hypernetwork on a flattened kernel matrix.

    Args:
        config: Neck/head depths and width
        target: Shape contract of the generated network
        params: Hypernetwork parameters θ_H
        kernel_flat: Flattened K_{S,S} of length input_dim²

    Returns:
        θ_T, one tensor per target parameter, reshaped to its declared shape
    """
    expected = target.input_dim * target.input_dim
    if kernel_flat.shape != (expected,):
        raise ShapeError(
            f"hypernetwork expects a kernel vector of length {expected}, got {kernel_flat.shape}"
        )
    features = ops.reshape(kernel_flat, (1, expected))
    features = mlp_forward(params, "hypernet.neck", config.neck_depth, features, activate_last=True)

    names, tensors = [], []
    for name, shape in target.parameter_shapes():
        flat = mlp_forward(params, _head_prefix(name), config.head_depth, features)
        names.append(name)
        tensors.append(ops.reshape(flat, shape))
    return TargetParams(names=names, tensors=tensors)


def target_logits(target: TargetShape, theta: TargetParams, kernel_vectors: Tensor) -> Tensor:
    """Pre-softmax class scores of T for kernel vectors [M, R] (or a single [R])."""
    if [name for name, _ in target.parameter_shapes()] != theta.names:
        raise ShapeError("target parameters do not follow the target shape's enumeration")
    for (name, shape), tensor in zip(target.parameter_shapes(), theta.tensors):
        if tensor.shape != shape:
            raise ShapeError(f"target tensor {name} has shape {tensor.shape}, expected {shape}")

    single = kernel_vectors.ndim == 1
    x = ops.reshape(kernel_vectors, (1, -1)) if single else kernel_vectors
    if x.ndim != 2 or x.shape[1] != target.input_dim:
        raise ShapeError(f"target network expects {target.input_dim} inputs, got {kernel_vectors.shape}")

    depth = len(target.layer_sizes)
    for index in range(depth):
        weight = theta[f"layers.{index}.weight"]
        bias = theta[f"layers.{index}.bias"] if target.use_bias else None
        x = ops.linear(x, weight, bias)
        if index < depth - 1:
            x = ops.relu(x)
    return ops.reshape(x, (target.way,)) if single else x


def target_forward(target: TargetShape, theta: TargetParams, kernel_vector: Tensor) -> Tensor:
    """Class distribution of T for kernel vectors; rows sum to 1."""
    return ops.softmax(target_logits(target, theta, kernel_vector), axis=-1)
