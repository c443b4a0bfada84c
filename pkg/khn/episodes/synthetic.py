"""Synthetic Gaussian-cluster task source."""

import logging
from pathlib import Path
from typing import Optional

import numpy as np

from khn.engine.rng import SeededRNG
from khn.episodes.types import Example
from khn.errors import DataError, IngestionError, LabelIndexError
from khn.models.schemas import DatasetDescription, SplitFractions, SyntheticDataConfig

logger = logging.getLogger(__name__)

CENTER_STREAM = 101


class SyntheticTaskSource:
    """Classes are Gaussian clusters around fixed centers of norm center_scale.

    The class pool is cut into contiguous train / val / test ranges, so
    evaluation episodes use classes never seen in training.
    """

    def __init__(
        self,
        input_dim: int,
        class_pool_size: int,
        cluster_spread: float,
        center_scale: float,
        seed: int = 0,
        splits: Optional[SplitFractions] = None,
        centers: Optional[np.ndarray] = None,
        split_classes: Optional[dict[str, list[int]]] = None,
    ):
        if input_dim < 1 or class_pool_size < 1:
            raise DataError("synthetic source needs input_dim >= 1 and class_pool_size >= 1")
        if cluster_spread < 0 or center_scale <= 0:
            raise DataError("cluster_spread must be >= 0 and center_scale > 0")
        self.input_dim = input_dim
        self.class_pool_size = class_pool_size
        self.cluster_spread = cluster_spread
        self.center_scale = center_scale
        self.seed = seed
        self.splits = splits or SplitFractions()

        if centers is None:
            centers = np.stack([self._make_center(c) for c in range(class_pool_size)])
        centers = np.asarray(centers, dtype=np.float64)
        if centers.shape != (class_pool_size, input_dim):
            raise DataError(f"centers have shape {centers.shape}, expected {(class_pool_size, input_dim)}")
        self.centers = centers
        self.centers.setflags(write=False)
        self.split_classes = split_classes or self._partition()

    @classmethod
    def from_config(cls, config: SyntheticDataConfig) -> "SyntheticTaskSource":
        return cls(
            input_dim=config.input_dim,
            class_pool_size=config.class_pool_size,
            cluster_spread=config.cluster_spread,
            center_scale=config.center_scale,
            seed=config.seed,
            splits=config.splits,
        )

    @classmethod
    def from_description(cls, description: DatasetDescription) -> "SyntheticTaskSource":
        source = description.source
        return cls(
            input_dim=source.input_dim,
            class_pool_size=source.class_pool_size,
            cluster_spread=source.cluster_spread,
            center_scale=source.center_scale,
            seed=source.seed,
            splits=source.splits,
            centers=np.array(description.centers, dtype=np.float64),
            split_classes={name: list(ids) for name, ids in description.split_classes.items()},
        )

    @property
    def config(self) -> SyntheticDataConfig:
        return SyntheticDataConfig(
            input_dim=self.input_dim,
            class_pool_size=self.class_pool_size,
            cluster_spread=self.cluster_spread,
            center_scale=self.center_scale,
            seed=self.seed,
            splits=self.splits,
        )

    @property
    def input_shape(self) -> tuple[int, ...]:
        return (self.input_dim,)

    def _make_center(self, class_id: int) -> np.ndarray:
        direction = SeededRNG(self.seed, CENTER_STREAM, class_id).normal((self.input_dim,))
        return self.center_scale * direction / np.linalg.norm(direction)

    def _partition(self) -> dict[str, list[int]]:
        n_train = int(round(self.class_pool_size * self.splits.train))
        n_val = int(round(self.class_pool_size * self.splits.val))
        n_val = min(n_val, self.class_pool_size - n_train)
        return {
            "train": list(range(0, n_train)),
            "val": list(range(n_train, n_train + n_val)),
            "test": list(range(n_train + n_val, self.class_pool_size)),
        }

    def center(self, class_id: int) -> np.ndarray:
        if not 0 <= class_id < self.class_pool_size:
            raise LabelIndexError(f"class {class_id} outside pool of {self.class_pool_size}")
        return self.centers[class_id]

    def class_ids(self, split: Optional[str] = None) -> list[int]:
        """Class ids of a split (the whole pool when split is None)."""
        if split is None:
            return list(range(self.class_pool_size))
        if split not in self.split_classes:
            raise DataError(f"unknown split {split!r}")
        return list(self.split_classes[split])

    def draw(self, class_id: int, count: int, rng: SeededRNG) -> list[np.ndarray]:
        return [synthetic_class_sample(self, class_id, rng).input for _ in range(count)]

    def describe(self) -> DatasetDescription:
        return DatasetDescription(
            source=self.config,
            split_classes={name: list(ids) for name, ids in self.split_classes.items()},
            centers=self.centers.tolist(),
        )


def synthetic_class_sample(source: SyntheticTaskSource, class_id: int, rng: SeededRNG) -> Example:
    """center(class_id) + cluster_spread · N(0, I), labelled with the source class id."""
    center = source.center(class_id)
    noise = rng.normal((source.input_dim,))
    return Example(input=center + source.cluster_spread * noise, label=class_id)


def write_description(source: SyntheticTaskSource, path: Path) -> Path:
    """Materialize a synthetic source as a JSON dataset description."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(source.describe().model_dump_json(indent=2))
    logger.info("wrote dataset description with %d classes to %s", source.class_pool_size, path)
    return path


def read_description(path: Path) -> SyntheticTaskSource:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise IngestionError(str(path), str(e)) from e
    return SyntheticTaskSource.from_description(DatasetDescription.model_validate_json(text))
