"""Prediction with optional support-set finetuning."""

import logging
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from khn.autodiff import ops
from khn.autodiff.optim import Adam
from khn.autodiff.tensor import Tensor, backward
from khn.episodes.types import Episode, Example
from khn.models.schemas import FinetuneConfig
from khn.networks.model import HypernetModel, forward_logits
from khn.training.loss import episode_loss

logger = logging.getLogger(__name__)


@dataclass
class Prediction:
    """Predicted labels and class distributions for a batch of queries."""

    labels: np.ndarray
    probabilities: np.ndarray
    tuning_losses: list[float] = field(default_factory=list)  # before the first step, then after each step


def tuning_task(model: HypernetModel, support: Sequence[Example]) -> Episode:
    """The task {S, S}: support set used as both support and query."""
    return Episode(
        support=list(support),
        query=list(support),
        way=model.way,
        shot=model.shot,
        queries_per_class=model.shot,
    )


def finetune(
    model: HypernetModel, support: Sequence[Example], config: FinetuneConfig
) -> tuple[HypernetModel, list[float]]:
    """
    Tune a clone of the model on the tuning task built from the support set.

    Args:
        model: Trained model; never modified
        support: Labeled support examples
        config: Steps, learning rate and which groups to tune

    Returns:
        (tuned clone, tuning-task loss before the first step and after every step)
    """
    tuned = model.clone()
    task = tuning_task(tuned, support)
    params = tuned.parameters(config.groups)
    optimizer = Adam(params, learning_rate=config.learning_rate)

    losses = []
    for _ in range(config.steps):
        tuned.zero_grad()
        loss = episode_loss(tuned, task)
        losses.append(loss.item())
        backward(loss)
        optimizer.step()
    tuned.zero_grad()
    losses.append(episode_loss(tuned, task).item())
    logger.debug("finetuned %d steps: loss %.4f -> %.4f", config.steps, losses[0], losses[-1])
    return tuned, losses


def predict(
    model: HypernetModel,
    support: Sequence[Example],
    query_inputs: Union[np.ndarray, Tensor],
    config: FinetuneConfig,
) -> Prediction:
    """
    Classify unlabeled queries given a labeled support set.

    With config.steps > 0 a private clone is finetuned first; the model passed
    in is left bitwise unchanged either way. Ties go to the lowest class index.
    """
    tuning_losses: list[float] = []
    classifier = model
    if config.steps > 0:
        classifier, tuning_losses = finetune(model, support, config)

    logits = forward_logits(classifier, support, query_inputs).detach()
    probabilities = ops.softmax(logits, axis=-1).numpy()
    return Prediction(
        labels=np.argmax(logits.data, axis=1),
        probabilities=probabilities,
        tuning_losses=tuning_losses,
    )


def predict_episode(model: HypernetModel, episode: Episode, config: FinetuneConfig) -> Prediction:
    """predict() on an episode's support and query inputs; query labels are not used."""
    return predict(model, episode.support, episode.query_inputs(), config)
