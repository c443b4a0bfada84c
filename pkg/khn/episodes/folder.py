"""Image-folder task source: root/<split>/<class_name>/*.png."""

import logging
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image, UnidentifiedImageError

from khn.engine.rng import SeededRNG
from khn.errors import DataError, IngestionError
from khn.models.schemas import FolderDataConfig

logger = logging.getLogger(__name__)

SPLITS = ("train", "val", "test")


class FolderDataSource:
    """Decoded PNG images grouped by class, one split of an image folder."""

    def __init__(self, root_path: str, image_size: int, split: str = "train", channels: int = 1):
        if split not in SPLITS:
            raise DataError(f"unknown split {split!r}")
        self.root_path = Path(root_path)
        self.image_size = image_size
        self.split = split
        self.channels = channels
        check_split_disjointness(self.root_path)
        self.images = load_folder_split(self)

    @classmethod
    def from_config(cls, config: FolderDataConfig, split: str) -> "FolderDataSource":
        return cls(config.root_path, config.image_size, split, config.channels)

    @property
    def input_shape(self) -> tuple[int, ...]:
        return (self.channels, self.image_size, self.image_size)

    def class_ids(self, split: Optional[str] = None) -> list[str]:
        if split is not None and split != self.split:
            raise DataError(f"source holds split {self.split!r}, not {split!r}")
        return sorted(self.images)

    def draw(self, class_id: str, count: int, rng: SeededRNG) -> list[np.ndarray]:
        items = self.images[class_id]
        if len(items) < count:
            raise DataError(f"class {class_id!r} has {len(items)} images, {count} needed")
        return rng.choice(items, count)


def check_split_disjointness(root: Path):
    """Raise DataError if a class directory name appears in two splits."""
    seen: dict[str, str] = {}
    for split in SPLITS:
        split_dir = root / split
        if not split_dir.is_dir():
            continue
        for class_dir in split_dir.iterdir():
            if not class_dir.is_dir():
                continue
            if class_dir.name in seen:
                raise DataError(
                    f"class {class_dir.name!r} appears in splits "
                    f"{seen[class_dir.name]!r} and {split!r}"
                )
            seen[class_dir.name] = split


def decode_image(path: Path, image_size: int, channels: int) -> np.ndarray:
    """Decode one PNG into a [channels, size, size] array with values in [0, 1]."""
    try:
        with Image.open(path) as image:
            image = image.convert("L" if channels == 1 else "RGB")
            image = image.resize((image_size, image_size), Image.Resampling.BILINEAR)
            array = np.asarray(image, dtype=np.float64) / 255.0
    except (OSError, UnidentifiedImageError, ValueError) as e:
        raise IngestionError(str(path), str(e)) from e
    if channels == 1:
        return array[None, :, :]
    return array.transpose(2, 0, 1)


def load_folder_split(source: FolderDataSource) -> dict[str, list[np.ndarray]]:
    """
    Decode every image of the source's split, grouped by class directory.

    Args:
        source: Folder source naming root, split, size and channel count

    Returns:
        Mapping class name -> decoded images in file-name order

    Raises:
        DataError: Missing split directory or an empty class
        IngestionError: A file could not be decoded (nothing is returned)
    """
    split_dir = source.root_path / source.split
    if not split_dir.is_dir():
        raise DataError(f"split directory {split_dir} does not exist")

    dataset: dict[str, list[np.ndarray]] = {}
    for class_dir in sorted(p for p in split_dir.iterdir() if p.is_dir()):
        files = sorted(class_dir.glob("*.png"))
        if not files:
            raise DataError(f"class directory {class_dir} holds no PNG images")
        dataset[class_dir.name] = [decode_image(f, source.image_size, source.channels) for f in files]

    if not dataset:
        raise DataError(f"split directory {split_dir} holds no classes")
    logger.info(
        "loaded %d classes, %d images from %s",
        len(dataset),
        sum(len(v) for v in dataset.values()),
        split_dir,
    )
    return dataset
