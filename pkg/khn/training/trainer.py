"""Episodic training loop."""

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from khn.autodiff.optim import SGD, Adam
from khn.autodiff.tensor import Tensor, backward
from khn.engine.rng import SeededRNG
from khn.episodes.sampler import TaskSource, sample_episode
from khn.errors import NumericError, TrainingDivergedError
from khn.models.schemas import EvalReport, FinetuneConfig, IterationMetrics, RunConfig, TrainConfig
from khn.networks.model import HypernetModel
from khn.training.evaluate import evaluate
from khn.training.loss import episode_loss

logger = logging.getLogger(__name__)

TRAIN_STREAM = 501
VALIDATION_STREAM = 502

IterationCallback = Callable[[IterationMetrics], None]
EvaluationCallback = Callable[[int, EvalReport], None]


@dataclass
class TrainResult:
    """Trained model with its loss history and periodic validation reports."""

    model: HypernetModel
    loss_history: list[float] = field(default_factory=list)
    evaluations: list[tuple[int, EvalReport]] = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return len(self.loss_history)


def make_optimizer(params: Sequence[Tensor], config: TrainConfig):
    if config.optimizer == "sgd":
        return SGD(params, learning_rate=config.learning_rate)
    return Adam(params, learning_rate=config.learning_rate)


def _taskset_loss(model: HypernetModel, source: TaskSource, config: RunConfig, iteration: int) -> Tensor:
    episodes = config.episodes
    losses = [
        episode_loss(
            model,
            sample_episode(
                source,
                episodes.way,
                episodes.shot,
                episodes.queries_per_class,
                SeededRNG(config.seed, TRAIN_STREAM, iteration, task),
                split="train",
            ),
        )
        for task in range(config.training.taskset_size)
    ]
    total = losses[0]
    for loss in losses[1:]:
        total = total + loss
    return total * (1.0 / len(losses)) if len(losses) > 1 else total


def train(
    source: TaskSource,
    config: RunConfig,
    model: Optional[HypernetModel] = None,
    validation_source: Optional[TaskSource] = None,
    on_iteration: Optional[IterationCallback] = None,
    on_evaluation: Optional[EvaluationCallback] = None,
) -> TrainResult:
    """
    Jointly optimize θ_E, θ_H and θ_k on sampled episodes.

    Each iteration samples taskset_size episodes from the train split,
    backpropagates their mean query loss and takes one optimizer step over
    all parameters. The episode of every iteration depends only on the run
    seed and the iteration number.

    Args:
        source: Source of training episodes
        config: Run configuration
        model: Model to train in place (initialized from config when None)
        validation_source: Source for periodic validation (val split)
        on_iteration: Receives one IterationMetrics row per iteration
        on_evaluation: Receives (iteration, report) for each validation

    Returns:
        TrainResult with the trained model and loss history

    Raises:
        TrainingDivergedError: A loss or gradient became non-finite
    """
    model = model or HypernetModel.from_config(config)
    training = config.training
    params = model.parameters()
    optimizer = make_optimizer(params, training)
    result = TrainResult(model=model)

    logger.info(
        "training %d iterations (%s, lr=%g) on %d parameters",
        training.iterations,
        training.optimizer,
        training.learning_rate,
        model.parameter_count(),
    )
    last_loss: Optional[float] = None
    for iteration in range(1, training.iterations + 1):
        started = time.perf_counter()
        model.zero_grad()
        try:
            loss = _taskset_loss(model, source, config, iteration)
            value = loss.item()
            backward(loss)
        except NumericError as e:
            raise TrainingDivergedError(iteration, last_loss, str(e)) from e
        for param in params:
            if param.grad is not None and not np.all(np.isfinite(param.grad)):
                raise TrainingDivergedError(iteration, value, f"non-finite gradient in {param.name}")
        optimizer.step()

        last_loss = value
        result.loss_history.append(value)
        wall_ms = (time.perf_counter() - started) * 1000.0
        logger.debug("iteration %d: loss %.6f (%.1f ms)", iteration, value, wall_ms)
        if on_iteration:
            on_iteration(IterationMetrics(iteration=iteration, loss=value, wall_ms=wall_ms))

        if training.eval_every and iteration % training.eval_every == 0 and validation_source is not None:
            report = evaluate(
                model,
                validation_source,
                training.eval_episodes,
                FinetuneConfig(steps=0),
                seed=SeededRNG(config.seed, VALIDATION_STREAM, iteration),
                queries_per_class=config.episodes.queries_per_class,
                split="val",
            )
            result.evaluations.append((iteration, report))
            logger.info("iteration %d validation accuracy %s", iteration, report.summary())
            if on_evaluation:
                on_evaluation(iteration, report)

    logger.info(
        "training finished: final loss %.4f",
        result.loss_history[-1] if result.loss_history else float("nan"),
    )
    return result
