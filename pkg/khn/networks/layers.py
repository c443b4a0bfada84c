"""Parameter containers and fully-connected building blocks."""

import math
from typing import Sequence

import numpy as np

from khn.autodiff import ops
from khn.autodiff.tensor import Tensor
from khn.engine.rng import SeededRNG

# Insertion order is the parameter enumeration order.
ParamDict = dict[str, Tensor]


def parameter(data: np.ndarray, name: str) -> Tensor:
    return Tensor(data, requires_grad=True, name=name)


def init_linear(params: ParamDict, prefix: str, fan_in: int, fan_out: int, rng: SeededRNG):
    """Weight [fan_out, fan_in] uniform in ±sqrt(1/fan_in), zero bias."""
    bound = math.sqrt(1.0 / fan_in)
    params[f"{prefix}.weight"] = parameter(rng.uniform(-bound, bound, (fan_out, fan_in)), f"{prefix}.weight")
    params[f"{prefix}.bias"] = parameter(np.zeros(fan_out), f"{prefix}.bias")


def init_mlp(params: ParamDict, prefix: str, sizes: Sequence[int], rng: SeededRNG):
    """Linear layers prefix.0 .. prefix.{len(sizes)-2} mapping sizes[i] -> sizes[i+1]."""
    for index, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        init_linear(params, f"{prefix}.{index}", fan_in, fan_out, rng)


def mlp_forward(params: ParamDict, prefix: str, depth: int, x: Tensor, activate_last: bool = False) -> Tensor:
    """Apply depth linear layers with ReLU between them (and after the last if asked)."""
    for index in range(depth):
        x = ops.linear(x, params[f"{prefix}.{index}.weight"], params[f"{prefix}.{index}.bias"])
        if index < depth - 1 or activate_last:
            x = ops.relu(x)
    return x


def count_parameters(params: ParamDict) -> int:
    return sum(p.size for p in params.values())


def clone_params(params: ParamDict) -> ParamDict:
    """Deep copy with fresh leaf tensors and no gradients."""
    return {
        name: Tensor(p.data.copy(), requires_grad=p.requires_grad, name=p.name)
        for name, p in params.items()
    }
