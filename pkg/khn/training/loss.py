"""Episode objective."""

from typing import Optional

from khn.autodiff import ops
from khn.autodiff.tensor import Tensor
from khn.episodes.types import Episode
from khn.models.schemas import AggregationMode
from khn.networks.model import HypernetModel, episode_forward


def episode_loss(
    model: HypernetModel, episode: Episode, aggregation: Optional[AggregationMode] = None
) -> Tensor:
    """Mean softmax cross-entropy of the query logits against the query labels."""
    logits = episode_forward(model, episode, aggregation)
    return ops.softmax_cross_entropy(logits, episode.query_labels())
