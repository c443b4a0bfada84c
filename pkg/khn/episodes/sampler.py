"""Episode sampling over task sources."""

from typing import Optional, Protocol, Sequence, Union

import numpy as np

from khn.engine.rng import SeededRNG
from khn.episodes.folder import FolderDataSource
from khn.episodes.synthetic import SyntheticTaskSource, read_description
from khn.episodes.types import Episode, Example
from khn.errors import DataError
from khn.models.schemas import DataConfig, DescribedDataConfig, FolderDataConfig, SyntheticDataConfig


class TaskSource(Protocol):
    """Anything episodes can be drawn from."""

    @property
    def input_shape(self) -> tuple[int, ...]: ...

    def class_ids(self, split: Optional[str] = None) -> Sequence: ...

    def draw(self, class_id, count: int, rng: SeededRNG) -> list[np.ndarray]: ...


def sample_episode(
    source: TaskSource,
    way: int,
    shot: int,
    queries_per_class: int,
    rng_seed: Union[int, SeededRNG],
    split: Optional[str] = None,
) -> Episode:
    """
    Draw an N-way K-shot episode.

    Classes are picked without replacement and assigned episode indices in
    the order drawn, a fresh bijection per episode. Support and query lists
    are shuffled.

    Args:
        source: Task source
        way: Classes per episode (N)
        shot: Support examples per class (K)
        queries_per_class: Query examples per class (Q)
        rng_seed: Seed or seeded stream; the episode is a pure function of it
        split: Split to draw classes from (source default when None)

    Returns:
        Episode with N·K support and N·Q query examples
    """
    if min(way, shot, queries_per_class) < 1:
        raise DataError("way, shot and queries_per_class must be positive")
    rng = rng_seed if isinstance(rng_seed, SeededRNG) else SeededRNG(rng_seed)

    classes = list(source.class_ids(split))
    if len(classes) < way:
        raise DataError(f"split {split or 'all'} has {len(classes)} classes, {way}-way episode requested")
    chosen = rng.choice(classes, way)

    support: list[Example] = []
    query: list[Example] = []
    for index, class_id in enumerate(chosen):
        inputs = source.draw(class_id, shot + queries_per_class, rng)
        if len(inputs) < shot + queries_per_class:
            raise DataError(
                f"class {class_id!r} yielded {len(inputs)} examples, "
                f"{shot + queries_per_class} needed"
            )
        support.extend(Example(input=x, label=index) for x in inputs[:shot])
        query.extend(Example(input=x, label=index) for x in inputs[shot:])

    support = [support[i] for i in rng.permutation(len(support))]
    query = [query[i] for i in rng.permutation(len(query))]
    return Episode(
        support=support,
        query=query,
        way=way,
        shot=shot,
        queries_per_class=queries_per_class,
        class_ids=chosen,
    )


def open_source(config: DataConfig, split: str) -> TaskSource:
    """Build the task source a data config describes.

    Synthetic sources hold every split; folder sources load only `split`.
    """
    if isinstance(config, SyntheticDataConfig):
        return SyntheticTaskSource.from_config(config)
    if isinstance(config, DescribedDataConfig):
        return read_description(config.path)
    if isinstance(config, FolderDataConfig):
        return FolderDataSource.from_config(config, split)
    raise DataError(f"unsupported data config {type(config).__name__}")
