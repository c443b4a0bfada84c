"""Model container and the full episode forward pass."""

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from khn.autodiff.tensor import Tensor
from khn.episodes.types import Episode, Example
from khn.errors import ShapeError
from khn.models.schemas import (
    AggregationMode,
    EncoderConfig,
    HypernetConfig,
    KernelConfig,
    RunConfig,
    TargetShape,
)
from khn.networks.encoder import encode_with_reference, init_encoder
from khn.networks.hypernet import (
    final_head_layer_names,
    flatten_kernel,
    generate_target_params,
    init_hypernet,
    target_logits,
)
from khn.networks.kernel import (
    KernelSpec,
    aggregate,
    init_kernel,
    order_support,
    query_kernel_matrix,
    support_kernel_matrix,
)
from khn.networks.layers import ParamDict, clone_params, count_parameters

logger = logging.getLogger(__name__)

GROUPS = ("encoder", "kernel", "hypernet")


@dataclass
class HypernetModel:
    """Configs plus the three parameter groups θ_E, θ_k and θ_H."""

    encoder_config: EncoderConfig
    kernel_config: KernelConfig
    hypernet_config: HypernetConfig
    target: TargetShape
    aggregation: AggregationMode
    way: int
    shot: int
    encoder: ParamDict = field(default_factory=dict)
    kernel: ParamDict = field(default_factory=dict)
    hypernet: ParamDict = field(default_factory=dict)

    @classmethod
    def from_config(cls, config: RunConfig, seed: Optional[int] = None) -> "HypernetModel":
        """Freshly initialized model for a run config."""
        seed = config.seed if seed is None else seed
        target = config.target
        model = cls(
            encoder_config=config.encoder,
            kernel_config=config.kernel,
            hypernet_config=config.hypernet,
            target=target,
            aggregation=config.aggregation,
            way=config.episodes.way,
            shot=config.episodes.shot,
            encoder=init_encoder(config.encoder, seed),
            kernel=init_kernel(config.kernel, config.encoder.output_dim, seed),
            hypernet=init_hypernet(config.hypernet, target, seed),
        )
        logger.debug("initialized model with %d parameters", model.parameter_count())
        return model

    @property
    def kernel_spec(self) -> KernelSpec:
        return KernelSpec(self.kernel_config, self.kernel)

    def groups(self) -> dict[str, list[Tensor]]:
        return {name: list(getattr(self, name).values()) for name in GROUPS}

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        """All parameters in the fixed enumeration order: encoder, kernel, hypernet."""
        return [item for name in GROUPS for item in getattr(self, name).items()]

    def parameters(self, groups: Sequence[str] = GROUPS) -> list[Tensor]:
        return [p for name in groups for p in getattr(self, name).values()]

    def parameter_count(self) -> int:
        return sum(count_parameters(getattr(self, name)) for name in GROUPS)

    def clone(self) -> "HypernetModel":
        """Deep copy sharing no parameter storage with this model."""
        return HypernetModel(
            encoder_config=self.encoder_config,
            kernel_config=self.kernel_config,
            hypernet_config=self.hypernet_config,
            target=self.target,
            aggregation=self.aggregation,
            way=self.way,
            shot=self.shot,
            encoder=clone_params(self.encoder),
            kernel=clone_params(self.kernel),
            hypernet=clone_params(self.hypernet),
        )

    def zero_grad(self):
        for param in self.parameters():
            param.grad = None


def zero_final_head_layers(model: HypernetModel):
    """Zero the last layer of every head, so θ_T = 0 and predictions are uniform."""
    for name in final_head_layer_names(model.hypernet_config, model.target):
        model.hypernet[name].data[...] = 0.0


def forward_logits(
    model: HypernetModel,
    support: Sequence[Example],
    query_inputs: Union[np.ndarray, Tensor],
    aggregation: Optional[AggregationMode] = None,
) -> Tensor:
    """Query logits [M, N] for a labeled support set and a batch of query inputs."""
    aggregation = aggregation or model.aggregation
    support_inputs = np.stack([example.input for example in support])
    support_labels = [example.label for example in support]
    if len(support) != model.way * model.shot:
        raise ShapeError(
            f"model expects {model.way}-way {model.shot}-shot support, got {len(support)} examples"
        )

    z_support, z_query = encode_with_reference(
        model.encoder_config, model.encoder, support_inputs, query_inputs
    )
    spec = model.kernel_spec
    rows = aggregate(order_support(z_support, support_labels), aggregation, model.way, model.shot)
    if rows.rows != model.target.input_dim:
        raise ShapeError(
            f"{aggregation} support has {rows.rows} rows, target expects {model.target.input_dim}"
        )
    kernel = support_kernel_matrix(spec, rows)
    theta = generate_target_params(
        model.hypernet_config, model.target, model.hypernet, flatten_kernel(kernel)
    )
    return target_logits(model.target, theta, query_kernel_matrix(spec, z_query, rows))


def episode_forward(
    model: HypernetModel, episode: Episode, aggregation: Optional[AggregationMode] = None
) -> Tensor:
    """
    Full pipeline on one episode.

    Support and queries are encoded with the same θ_E; the label-ordered,
    aggregated support gives K_{S,S}, the hypernetwork turns it into θ_T,
    and each query's kernel vector is scored by the target network.

    Returns:
        Logits [M, N], one row per query in episode order
    """
    if episode.way != model.way or episode.shot != model.shot:
        raise ShapeError(
            f"model built for {model.way}-way {model.shot}-shot, "
            f"episode is {episode.way}-way {episode.shot}-shot"
        )
    return forward_logits(model, episode.support, episode.query_inputs(), aggregation)
