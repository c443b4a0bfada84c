"""Configuration and report schemas for kernel-conditioned hypernetworks."""

import math
from typing import Annotated, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, model_validator

CONFIG_VERSION = 1

AggregationMode = Literal["averaged", "fine_grained"]
Split = Literal["train", "val", "test"]


class StrictModel(BaseModel):
    """Base for every schema: unknown keys are validation errors."""

    model_config = ConfigDict(extra="forbid")


# Data sources


class SplitFractions(StrictModel):
    """Share of a synthetic class pool assigned to each split."""

    train: float = Field(default=0.6, gt=0)
    val: float = Field(default=0.2, ge=0)
    test: float = Field(default=0.2, ge=0)

    @model_validator(mode="after")
    def _sums_to_one(self) -> "SplitFractions":
        if not math.isclose(self.train + self.val + self.test, 1.0, abs_tol=1e-9):
            raise ValueError("split fractions must sum to 1")
        return self


class SyntheticDataConfig(StrictModel):
    """Gaussian clusters around fixed, seed-derived class centers."""

    kind: Literal["synthetic"] = "synthetic"
    input_dim: int = Field(default=16, ge=1)
    class_pool_size: int = Field(default=100, ge=1)
    cluster_spread: float = Field(default=1.0, ge=0)
    center_scale: float = Field(default=10.0, gt=0)
    seed: int = Field(default=0, ge=0)
    splits: SplitFractions = Field(default_factory=SplitFractions)


class FolderDataConfig(StrictModel):
    """Image folders laid out as root/<split>/<class_name>/*.png."""

    kind: Literal["folder"] = "folder"
    root_path: str
    image_size: int = Field(default=32, ge=1)
    channels: Literal[1, 3] = 1


class DescribedDataConfig(StrictModel):
    """A synthetic dataset materialized on disk by `khn gen-data`."""

    kind: Literal["described"] = "described"
    path: str


DataConfig = Annotated[
    Union[SyntheticDataConfig, FolderDataConfig, DescribedDataConfig],
    Field(discriminator="kind"),
]


class DatasetDescription(StrictModel):
    """Everything needed to rebuild a synthetic source from disk."""

    format_version: Literal[1] = 1
    source: SyntheticDataConfig
    split_classes: dict[str, list[int]]
    centers: list[list[float]]


class EpisodeConfig(StrictModel):
    """Shape of an N-way K-shot episode."""

    way: int = Field(default=5, ge=1)
    shot: int = Field(default=1, ge=1)
    queries_per_class: int = Field(default=16, ge=1)


# Networks


class EncoderConfig(StrictModel):
    """Backbone E mapping inputs to embeddings."""

    kind: Literal["mlp", "conv4"] = "mlp"
    input_shape: list[int] = Field(default_factory=lambda: [16])
    mlp_hidden_sizes: list[int] = Field(default_factory=lambda: [64, 64])
    embedding_dim: Optional[int] = Field(default=None, ge=1)

    @model_validator(mode="after")
    def _resolve_embedding_dim(self) -> "EncoderConfig":
        if any(extent < 1 for extent in self.input_shape):
            raise ValueError("input_shape extents must be positive")
        if self.kind == "mlp":
            if len(self.input_shape) != 1:
                raise ValueError("mlp encoder needs a vector input_shape [dim]")
            if any(size < 1 for size in self.mlp_hidden_sizes):
                raise ValueError("mlp_hidden_sizes must be positive")
            if self.embedding_dim is None:
                self.embedding_dim = 64
            return self

        if len(self.input_shape) != 3:
            raise ValueError("conv4 encoder needs an image input_shape [channels, height, width]")
        _, height, width = self.input_shape
        if height % 16 or width % 16:
            raise ValueError("conv4 needs height and width divisible by 16")
        flattened = 64 * (height // 16) * (width // 16)
        if self.embedding_dim is None:
            self.embedding_dim = flattened
        elif self.embedding_dim != flattened:
            raise ValueError(
                f"conv4 on {self.input_shape} yields embedding_dim {flattened}, "
                f"not {self.embedding_dim}"
            )
        return self

    @property
    def output_dim(self) -> int:
        assert self.embedding_dim is not None
        return self.embedding_dim


class KernelConfig(StrictModel):
    """Kernel function and its optional learned transform f."""

    kind: Literal["dot", "cosine"] = "cosine"
    transform: Literal["identity", "mlp"] = "identity"
    transform_hidden_sizes: list[int] = Field(default_factory=list)
    transform_out_dim: int = Field(default=32, ge=1)
    cosine_epsilon: float = Field(default=1e-8, gt=0)


class HypernetConfig(StrictModel):
    """Neck and per-parameter heads, plus the hidden layers of the target network."""

    neck_depth: int = Field(default=1, ge=0)
    head_depth: int = Field(default=2, ge=1)
    hidden_dim: int = Field(default=64, ge=1)
    target_hidden_sizes: list[int] = Field(default_factory=list)
    target_use_bias: bool = True


class TargetShape(StrictModel):
    """Layer contract of the generated classifier T."""

    input_dim: int = Field(ge=1)
    layer_sizes: list[int] = Field(min_length=1)
    use_bias: bool = True

    @property
    def way(self) -> int:
        return self.layer_sizes[-1]

    def parameter_shapes(self) -> list[tuple[str, tuple[int, ...]]]:
        """Target tensors in enumeration order: layer ascending, weight before bias."""
        shapes = []
        fan_in = self.input_dim
        for index, size in enumerate(self.layer_sizes):
            shapes.append((f"layers.{index}.weight", (size, fan_in)))
            if self.use_bias:
                shapes.append((f"layers.{index}.bias", (size,)))
            fan_in = size
        return shapes

    @classmethod
    def for_episodes(
        cls, episodes: EpisodeConfig, aggregation: AggregationMode, hypernet: HypernetConfig
    ) -> "TargetShape":
        rows = episodes.way if aggregation == "averaged" else episodes.way * episodes.shot
        return cls(
            input_dim=rows,
            layer_sizes=[*hypernet.target_hidden_sizes, episodes.way],
            use_bias=hypernet.target_use_bias,
        )


# Training


class TrainConfig(StrictModel):
    """Episodic training loop."""

    learning_rate: float = Field(default=1e-3, ge=0)
    epochs: int = Field(default=5, ge=1)
    tasks_per_epoch: int = Field(default=100, ge=1)
    taskset_size: int = Field(default=1, ge=1)
    optimizer: Literal["adam", "sgd"] = "adam"
    eval_every: int = Field(default=0, ge=0)
    eval_episodes: int = Field(default=20, ge=1)

    @property
    def iterations(self) -> int:
        return self.epochs * self.tasks_per_epoch


class FinetuneConfig(StrictModel):
    """Support-set tuning performed at prediction time."""

    steps: int = Field(default=10, ge=0)
    learning_rate: float = Field(default=1e-4, gt=0)
    tune_encoder: bool = True
    tune_hypernet: bool = True
    tune_kernel: bool = True

    @property
    def groups(self) -> list[str]:
        selected = []
        if self.tune_encoder:
            selected.append("encoder")
        if self.tune_hypernet:
            selected.append("hypernet")
        if self.tune_kernel:
            selected.append("kernel")
        return selected


class RunConfig(StrictModel):
    """Complete, versioned description of a run."""

    version: Literal[1] = CONFIG_VERSION
    seed: int = Field(default=0, ge=0)
    output_dir: str = "runs/default"
    data: DataConfig = Field(default_factory=SyntheticDataConfig)
    eval_data: Optional[DataConfig] = None
    episodes: EpisodeConfig = Field(default_factory=EpisodeConfig)
    encoder: EncoderConfig = Field(default_factory=EncoderConfig)
    kernel: KernelConfig = Field(default_factory=KernelConfig)
    aggregation: AggregationMode = "averaged"
    hypernet: HypernetConfig = Field(default_factory=HypernetConfig)
    training: TrainConfig = Field(default_factory=TrainConfig)
    finetune: FinetuneConfig = Field(default_factory=FinetuneConfig)

    @model_validator(mode="after")
    def _input_matches_data(self) -> "RunConfig":
        if isinstance(self.data, SyntheticDataConfig) and self.encoder.input_shape != [self.data.input_dim]:
            raise ValueError(
                f"encoder.input_shape {self.encoder.input_shape} "
                f"does not match data.input_dim {self.data.input_dim}"
            )
        if isinstance(self.data, FolderDataConfig):
            expected = [self.data.channels, self.data.image_size, self.data.image_size]
            if self.encoder.input_shape != expected:
                raise ValueError(
                    f"encoder.input_shape {self.encoder.input_shape} does not match images {expected}"
                )
        return self

    @property
    def target(self) -> TargetShape:
        return TargetShape.for_episodes(self.episodes, self.aggregation, self.hypernet)


# Reports and metrics


class EvalReport(StrictModel):
    """Accuracy over evaluation episodes, reported as mean ± 95% interval."""

    episode_count: int = Field(ge=1)
    mean_accuracy: float = Field(ge=0, le=1)
    ci95_halfwidth: float = Field(ge=0)
    per_episode_accuracies: list[float]
    finetuned: bool = False

    @model_validator(mode="after")
    def _consistent(self) -> "EvalReport":
        if len(self.per_episode_accuracies) != self.episode_count:
            raise ValueError("per_episode_accuracies must hold one entry per episode")
        if not math.isclose(self.ci95_halfwidth, ci95_halfwidth(self.per_episode_accuracies), abs_tol=1e-12):
            raise ValueError("ci95_halfwidth does not match per_episode_accuracies")
        return self

    @classmethod
    def from_accuracies(cls, accuracies: list[float], finetuned: bool = False) -> "EvalReport":
        values = [float(a) for a in accuracies]
        return cls(
            episode_count=len(values),
            mean_accuracy=sum(values) / len(values),
            ci95_halfwidth=ci95_halfwidth(values),
            per_episode_accuracies=values,
            finetuned=finetuned,
        )

    def summary(self) -> str:
        return f"{100 * self.mean_accuracy:.2f} ± {100 * self.ci95_halfwidth:.2f}"


def ci95_halfwidth(values: list[float]) -> float:
    """1.96 · population standard deviation / sqrt(n); 0 for a single value."""
    n = len(values)
    if n < 2:
        return 0.0
    mean = sum(values) / n
    variance = sum((v - mean) ** 2 for v in values) / n
    return 1.96 * math.sqrt(variance) / math.sqrt(n)


class IterationMetrics(StrictModel):
    """One row of the training metrics file."""

    iteration: int = Field(ge=1)
    loss: float
    wall_ms: float = Field(ge=0)


class EvaluationMetrics(StrictModel):
    """Summary row of one evaluation."""

    iteration: Optional[int] = None  # None: standalone evaluation
    episode_count: int
    mean_accuracy: float
    ci95_halfwidth: float
    finetuned: bool = False

    @classmethod
    def from_report(cls, report: EvalReport, iteration: Optional[int] = None) -> "EvaluationMetrics":
        return cls(
            iteration=iteration,
            episode_count=report.episode_count,
            mean_accuracy=report.mean_accuracy,
            ci95_halfwidth=report.ci95_halfwidth,
            finetuned=report.finetuned,
        )
