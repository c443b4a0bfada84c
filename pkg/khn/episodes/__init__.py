"""Few-shot episodes and the sources they are drawn from."""

from khn.episodes.folder import FolderDataSource, check_split_disjointness, decode_image, load_folder_split
from khn.episodes.sampler import TaskSource, open_source, sample_episode
from khn.episodes.synthetic import (
    SyntheticTaskSource,
    read_description,
    synthetic_class_sample,
    write_description,
)
from khn.episodes.types import Episode, Example

__all__ = [
    "Episode",
    "Example",
    "FolderDataSource",
    "SyntheticTaskSource",
    "TaskSource",
    "check_split_disjointness",
    "decode_image",
    "load_folder_split",
    "open_source",
    "read_description",
    "sample_episode",
    "synthetic_class_sample",
    "write_description",
]
