"""Averaged vs fine-grained support aggregation at matched budgets."""

import logging
from dataclasses import dataclass, field
from typing import Sequence

from khn.episodes.sampler import open_source
from khn.models.schemas import AggregationMode, EvalReport, RunConfig
from khn.training.evaluate import evaluate
from khn.training.trainer import train

logger = logging.getLogger(__name__)


@dataclass
class AblationResult:
    mode: AggregationMode
    reports: list[EvalReport] = field(default_factory=list)

    @property
    def mean_accuracy(self) -> float:
        return sum(r.mean_accuracy for r in self.reports) / len(self.reports)


def aggregation_ablation(
    config: RunConfig,
    seeds: Sequence[int],
    episode_count: int = 100,
    modes: Sequence[AggregationMode] = ("averaged", "fine_grained"),
) -> dict[str, AblationResult]:
    """
    Train and evaluate one model per (mode, seed) with otherwise identical settings.

    Every mode sees the same training episodes and evaluation episodes for
    a given seed; only the aggregation (and with it the kernel size) differs.
    """
    train_source = open_source(config.data, "train")
    eval_source = open_source(config.eval_data or config.data, "test")
    results = {mode: AblationResult(mode=mode) for mode in modes}
    for seed in seeds:
        for mode in modes:
            run = RunConfig.model_validate({**config.model_dump(), "aggregation": mode, "seed": seed})
            trained = train(train_source, run).model
            report = evaluate(
                trained,
                eval_source,
                episode_count,
                run.finetune.model_copy(update={"steps": 0}),
                seed=seed,
                queries_per_class=run.episodes.queries_per_class,
            )
            results[mode].reports.append(report)
            logger.info("ablation %s seed %d: %s", mode, seed, report.summary())
    return results
