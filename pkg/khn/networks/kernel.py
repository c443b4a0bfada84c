"""Support ordering, aggregation and the kernel functions over embeddings."""

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from khn.autodiff import ops
from khn.autodiff.tensor import Tensor
from khn.engine.rng import SeededRNG
from khn.errors import ConfigError, ShapeError
from khn.models.schemas import AggregationMode, KernelConfig
from khn.networks.layers import ParamDict, init_mlp, mlp_forward

KERNEL_STREAM = 301


@dataclass
class KernelSpec:
    """Kernel kind plus the optional learned transform f and its parameters θ_k."""

    config: KernelConfig
    params: ParamDict = field(default_factory=dict)

    def __post_init__(self):
        if (self.config.transform == "identity") != (not self.params):
            raise ConfigError("kernel parameters must be empty exactly when the transform is identity")

    @property
    def kind(self) -> str:
        return self.config.kind

    @property
    def epsilon(self) -> float:
        return self.config.cosine_epsilon

    def transform(self, z: Tensor) -> Tensor:
        if self.config.transform == "identity":
            return z
        return mlp_forward(self.params, "kernel.transform", len(self.config.transform_hidden_sizes) + 1, z)


def init_kernel(config: KernelConfig, embedding_dim: int, seed: int) -> ParamDict:
    """θ_k: empty for the identity transform."""
    params: ParamDict = {}
    if config.transform == "mlp":
        sizes = [embedding_dim, *config.transform_hidden_sizes, config.transform_out_dim]
        init_mlp(params, "kernel.transform", sizes, SeededRNG(seed, KERNEL_STREAM))
    return params


@dataclass
class OrderedSupport:
    """Support embeddings Z_S with rows sorted by class label."""

    embeddings: Tensor
    row_labels: list[int]
    pi: list[int]

    @property
    def rows(self) -> int:
        return self.embeddings.shape[0]


def order_support(embeddings: Tensor, labels: Sequence[int]) -> OrderedSupport:
    """Stable sort of support rows by label; within a class, input order is kept."""
    if embeddings.ndim != 2 or embeddings.shape[0] != len(labels) or len(labels) < 1:
        raise ShapeError(f"{len(labels)} labels for embeddings of shape {embeddings.shape}")
    pi = [int(i) for i in np.argsort(np.asarray(labels), kind="stable")]
    return OrderedSupport(
        embeddings=ops.take_rows(embeddings, pi),
        row_labels=[int(labels[i]) for i in pi],
        pi=pi,
    )


def aggregate(ordered: OrderedSupport, mode: AggregationMode, way: int, shot: int) -> OrderedSupport:
    """
    Averaged mode replaces each class's rows by their mean; fine-grained keeps them all.

    Args:
        ordered: Label-sorted support with way·shot rows
        mode: "averaged" or "fine_grained"
        way: Classes in the episode
        shot: Rows per class

    Returns:
        way rows (averaged) or the input unchanged (fine_grained)
    """
    expected = [label for label in range(way) for _ in range(shot)]
    if ordered.row_labels != expected:
        raise ShapeError(f"support rows {ordered.row_labels} are not {shot} per class for {way} classes")
    if mode == "fine_grained":
        return ordered
    if mode != "averaged":
        raise ConfigError(f"unknown aggregation mode {mode!r}")
    dim = ordered.embeddings.shape[1]
    grouped = ops.reshape(ordered.embeddings, (way, shot, dim))
    return OrderedSupport(
        embeddings=ops.mean(grouped, axis=1),
        row_labels=list(range(way)),
        pi=ordered.pi,
    )


def pairwise_kernel(spec: KernelSpec, a: Tensor, b: Tensor) -> Tensor:
    """Kernel values between every row of a [m, d] and every row of b [n, d]."""
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ShapeError(f"kernel inputs {a.shape} and {b.shape} do not share an embedding dimension")
    fa = spec.transform(a)
    fb = spec.transform(b)
    products = ops.matmul(fa, ops.transpose(fb))
    if spec.kind == "dot":
        return products
    norm_a = ops.clamp_min(ops.sqrt(ops.sum(fa * fa, axis=1, keepdims=True)), spec.epsilon)
    norm_b = ops.clamp_min(ops.sqrt(ops.sum(fb * fb, axis=1, keepdims=True)), spec.epsilon)
    return products / (norm_a * ops.transpose(norm_b))


def kernel_value(spec: KernelSpec, z1: Tensor, z2: Tensor) -> Tensor:
    """k(z1, z2) for two embedding vectors, as a scalar tensor."""
    if z1.shape != z2.shape or z1.ndim != 1:
        raise ShapeError(f"kernel_value needs two vectors of equal length, got {z1.shape} and {z2.shape}")
    one_by_one = pairwise_kernel(spec, ops.reshape(z1, (1, -1)), ops.reshape(z2, (1, -1)))
    return ops.reshape(one_by_one, ())


def support_kernel_matrix(spec: KernelSpec, rows: OrderedSupport) -> Tensor:
    """K_{S,S} [R, R] over the aggregated support rows, symmetric by construction."""
    gram = pairwise_kernel(spec, rows.embeddings, rows.embeddings)
    return (gram + ops.transpose(gram)) * 0.5


def query_kernel_vector(spec: KernelSpec, query_embedding: Tensor, rows: OrderedSupport) -> Tensor:
    """k_{x,S} [R] for one query embedding, in the row order of K_{S,S}."""
    if query_embedding.ndim != 1:
        raise ShapeError(f"query embedding must be a vector, got shape {query_embedding.shape}")
    return ops.reshape(query_kernel_matrix(spec, ops.reshape(query_embedding, (1, -1)), rows), (-1,))


def query_kernel_matrix(spec: KernelSpec, query_embeddings: Tensor, rows: OrderedSupport) -> Tensor:
    """Kernel vectors of a batch of queries, one row per query: [M, R]."""
    return pairwise_kernel(spec, query_embeddings, rows.embeddings)
