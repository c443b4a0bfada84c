"""Configuration schemas and presets."""

from khn.models.presets import PRESETS, get_preset
from khn.models.schemas import (
    AggregationMode,
    DataConfig,
    DatasetDescription,
    DescribedDataConfig,
    EncoderConfig,
    EpisodeConfig,
    EvalReport,
    EvaluationMetrics,
    FinetuneConfig,
    FolderDataConfig,
    HypernetConfig,
    IterationMetrics,
    KernelConfig,
    RunConfig,
    SyntheticDataConfig,
    TargetShape,
    TrainConfig,
)

__all__ = [
    "AggregationMode",
    "DataConfig",
    "DatasetDescription",
    "DescribedDataConfig",
    "EncoderConfig",
    "EpisodeConfig",
    "EvalReport",
    "EvaluationMetrics",
    "FinetuneConfig",
    "FolderDataConfig",
    "HypernetConfig",
    "IterationMetrics",
    "KernelConfig",
    "PRESETS",
    "RunConfig",
    "SyntheticDataConfig",
    "TargetShape",
    "TrainConfig",
    "get_preset",
]
