"""Encoding network E: MLP and Conv4 backbones."""

import math
from typing import Union

import numpy as np

from khn.autodiff import ops
from khn.autodiff.tensor import Tensor
from khn.engine.rng import SeededRNG
from khn.errors import ShapeError
from khn.models.schemas import EncoderConfig
from khn.networks.layers import ParamDict, init_mlp, mlp_forward, parameter

ENCODER_STREAM = 201
CONV4_BLOCKS = 4
CONV4_WIDTH = 64
BN_EPSILON = 1e-5


def init_encoder(config: EncoderConfig, seed: int) -> ParamDict:
    """Encoder parameters θ_E; deterministic per seed."""
    rng = SeededRNG(seed, ENCODER_STREAM)
    params: ParamDict = {}
    if config.kind == "mlp":
        sizes = [config.input_shape[0], *config.mlp_hidden_sizes, config.output_dim]
        init_mlp(params, "encoder.layers", sizes, rng)
        return params

    in_channels = config.input_shape[0]
    for block in range(CONV4_BLOCKS):
        prefix = f"encoder.blocks.{block}"
        fan_in = in_channels * 9
        bound = math.sqrt(1.0 / fan_in)
        params[f"{prefix}.conv.weight"] = parameter(
            rng.uniform(-bound, bound, (CONV4_WIDTH, in_channels, 3, 3)), f"{prefix}.conv.weight"
        )
        params[f"{prefix}.bn.scale"] = parameter(np.ones(CONV4_WIDTH), f"{prefix}.bn.scale")
        params[f"{prefix}.bn.shift"] = parameter(np.zeros(CONV4_WIDTH), f"{prefix}.bn.shift")
        in_channels = CONV4_WIDTH
    return params


def _as_batch(config: EncoderConfig, batch: Union[Tensor, np.ndarray]) -> Tensor:
    tensor = batch if isinstance(batch, Tensor) else Tensor(batch)
    if tensor.ndim < 1 or tensor.shape[0] < 1:
        raise ShapeError("encoder needs a non-empty batch")
    if list(tensor.shape[1:]) != list(config.input_shape):
        raise ShapeError(f"batch of shape {tensor.shape} does not match input_shape {config.input_shape}")
    return tensor


def encode(config: EncoderConfig, params: ParamDict, batch: Union[Tensor, np.ndarray]) -> Tensor:
    """
    Embed a batch of inputs.

    Args:
        config: Encoder configuration
        params: Encoder parameters θ_E
        batch: Inputs [B, *input_shape]

    Returns:
        Embeddings [B, embedding_dim]; Conv4 normalizes with this batch's statistics
    """
    return encode_with_reference(config, params, batch)[0]


def encode_with_reference(
    config: EncoderConfig,
    params: ParamDict,
    reference: Union[Tensor, np.ndarray],
    *others: Union[Tensor, np.ndarray],
) -> list[Tensor]:
    """Embed several batches; Conv4 batch normalization uses the reference batch's statistics."""
    batches = [_as_batch(config, b) for b in (reference, *others)]
    if config.kind == "mlp":
        depth = len(config.mlp_hidden_sizes) + 1
        return [mlp_forward(params, "encoder.layers", depth, x) for x in batches]
    return _conv4_forward(params, batches)


def _conv4_forward(params: ParamDict, batches: list[Tensor]) -> list[Tensor]:
    for block in range(CONV4_BLOCKS):
        prefix = f"encoder.blocks.{block}"
        # no conv bias: the batch norm shift is the only per-channel offset
        batches = [ops.conv2d(x, params[f"{prefix}.conv.weight"]) for x in batches]
        batches = _batch_norm(batches, params[f"{prefix}.bn.scale"], params[f"{prefix}.bn.shift"])
        batches = [ops.max_pool2d(ops.relu(x)) for x in batches]
    return [ops.reshape(x, (x.shape[0], -1)) for x in batches]


def _batch_norm(batches: list[Tensor], scale: Tensor, shift: Tensor) -> list[Tensor]:
    reference = batches[0]
    axes = (0, 2, 3)
    mean = ops.mean(reference, axis=axes, keepdims=True)
    centered = reference - mean
    std = ops.sqrt(ops.mean(centered * centered, axis=axes, keepdims=True) + BN_EPSILON)
    channel_shape = (1, scale.shape[0], 1, 1)
    gamma = ops.reshape(scale, channel_shape)
    beta = ops.reshape(shift, channel_shape)
    return [(x - mean) / std * gamma + beta for x in batches]
