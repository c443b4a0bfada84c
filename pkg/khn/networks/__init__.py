"""Encoder, kernel, hypernetwork and the model that ties them together."""

from khn.networks.encoder import encode, encode_with_reference, init_encoder
from khn.networks.hypernet import (
    TargetParams,
    flatten_kernel,
    generate_target_params,
    init_hypernet,
    target_forward,
    target_logits,
)
from khn.networks.kernel import (
    KernelSpec,
    OrderedSupport,
    aggregate,
    init_kernel,
    kernel_value,
    order_support,
    pairwise_kernel,
    query_kernel_matrix,
    query_kernel_vector,
    support_kernel_matrix,
)
from khn.networks.model import HypernetModel, episode_forward, forward_logits, zero_final_head_layers

__all__ = [
    "HypernetModel",
    "KernelSpec",
    "OrderedSupport",
    "TargetParams",
    "aggregate",
    "encode",
    "encode_with_reference",
    "episode_forward",
    "flatten_kernel",
    "forward_logits",
    "generate_target_params",
    "init_encoder",
    "init_hypernet",
    "init_kernel",
    "kernel_value",
    "order_support",
    "pairwise_kernel",
    "query_kernel_matrix",
    "query_kernel_vector",
    "support_kernel_matrix",
    "target_forward",
    "target_logits",
    "zero_final_head_layers",
]
