"""Episodic evaluation."""

import asyncio
import logging
from typing import Callable, Optional, Sequence, Union

import numpy as np

from khn.config import runtime_config
from khn.engine.rng import SeededRNG
from khn.episodes.sampler import TaskSource, sample_episode
from khn.episodes.types import Episode
from khn.models.schemas import EvalReport, FinetuneConfig
from khn.networks.model import HypernetModel
from khn.training.predict import predict_episode

logger = logging.getLogger(__name__)

EVAL_STREAM = 601

# Episode -> predicted query labels
Predictor = Callable[[Episode], np.ndarray]


def episode_accuracy(predicted: np.ndarray, episode: Episode) -> float:
    return float(np.mean(np.asarray(predicted) == np.asarray(episode.query_labels())))


def _evaluate_one(
    predictor: Predictor,
    source: TaskSource,
    rng: SeededRNG,
    way: int,
    shot: int,
    queries_per_class: int,
    split: Optional[str],
) -> float:
    episode = sample_episode(source, way, shot, queries_per_class, rng, split=split)
    return episode_accuracy(predictor(episode), episode)


async def _evaluate_batched(
    predictor: Predictor,
    source: TaskSource,
    rngs: list[SeededRNG],
    way: int,
    shot: int,
    queries_per_class: int,
    split: Optional[str],
    max_concurrent: int,
) -> list[float]:
    accuracies: list[float] = []
    for i in range(0, len(rngs), max_concurrent):
        batch = rngs[i : i + max_concurrent]
        tasks = [
            asyncio.to_thread(_evaluate_one, predictor, source, rng, way, shot, queries_per_class, split)
            for rng in batch
        ]
        accuracies.extend(await asyncio.gather(*tasks))
    return accuracies


def run_evaluation(
    predictor: Predictor,
    source: TaskSource,
    episode_count: int,
    way: int,
    shot: int,
    queries_per_class: int = 16,
    seed: Union[int, SeededRNG] = 0,
    split: Optional[str] = "test",
    threads: Optional[int] = None,
    finetuned: bool = False,
) -> EvalReport:
    """
    Score any predictor over freshly sampled episodes.

    Episode i is drawn from the stream (seed, i), so results do not depend
    on the thread count.

    Args:
        predictor: Maps an episode to predicted query labels
        source: Task source to sample from
        episode_count: Number of episodes (>= 1)
        way, shot, queries_per_class: Episode shape
        seed: Root seed or stream
        split: Split to sample classes from
        threads: Concurrent episodes (defaults to KHN_THREADS)
        finetuned: Recorded on the report

    Returns:
        EvalReport over exactly episode_count episodes
    """
    if episode_count < 1:
        raise ValueError("episode_count must be >= 1")
    root = seed if isinstance(seed, SeededRNG) else SeededRNG(seed)
    rngs = [root.derive(EVAL_STREAM, i) for i in range(episode_count)]
    max_concurrent = max(1, threads if threads is not None else runtime_config.threads)

    if max_concurrent == 1:
        accuracies = [
            _evaluate_one(predictor, source, rng, way, shot, queries_per_class, split)
            for rng in rngs
        ]
    else:
        accuracies = asyncio.run(
            _evaluate_batched(predictor, source, rngs, way, shot, queries_per_class, split, max_concurrent)
        )

    report = EvalReport.from_accuracies(accuracies, finetuned=finetuned)
    logger.info(
        "evaluated %d episodes (%s): %s",
        episode_count,
        "finetuned" if finetuned else "plain",
        report.summary(),
    )
    return report


def evaluate(
    model: HypernetModel,
    source: TaskSource,
    episode_count: int,
    finetune_config: FinetuneConfig,
    seed: Union[int, SeededRNG] = 0,
    queries_per_class: int = 16,
    split: Optional[str] = "test",
    threads: Optional[int] = None,
) -> EvalReport:
    """Accuracy of the model (finetuned per episode when finetune_config.steps > 0)."""

    def predictor(episode: Episode) -> np.ndarray:
        return predict_episode(model, episode, finetune_config).labels

    return run_evaluation(
        predictor,
        source,
        episode_count,
        model.way,
        model.shot,
        queries_per_class,
        seed,
        split,
        threads,
        finetuned=finetune_config.steps > 0,
    )


def evaluate_variants(
    model: HypernetModel,
    source: TaskSource,
    episode_count: int,
    finetune_config: FinetuneConfig,
    variants: Sequence[str] = ("plain", "finetuned"),
    **kwargs,
) -> dict[str, EvalReport]:
    """Evaluate the plain and/or finetuned predictor on the same episodes."""
    reports = {}
    for variant in variants:
        config = (
            finetune_config
            if variant == "finetuned"
            else finetune_config.model_copy(update={"steps": 0})
        )
        reports[variant] = evaluate(model, source, episode_count, config, **kwargs)
    return reports
