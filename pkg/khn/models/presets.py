"""Named run configurations."""

from typing import Callable

from khn.errors import ConfigError
from khn.models.schemas import (
    EncoderConfig,
    EpisodeConfig,
    FolderDataConfig,
    HypernetConfig,
    KernelConfig,
    RunConfig,
    SyntheticDataConfig,
    TrainConfig,
)


def desk() -> RunConfig:
    """Synthetic 5-way 1-shot tasks with an MLP backbone."""
    return RunConfig(
        output_dir="runs/desk",
        data=SyntheticDataConfig(input_dim=16, class_pool_size=100, cluster_spread=1.0, center_scale=10.0),
        encoder=EncoderConfig(kind="mlp", input_shape=[16], mlp_hidden_sizes=[64, 64], embedding_dim=64),
        hypernet=HypernetConfig(neck_depth=1, head_depth=2, hidden_dim=64),
        training=TrainConfig(learning_rate=1e-3, epochs=5, tasks_per_epoch=100),
    )


def gradcheck() -> RunConfig:
    """Desk architecture at reduced widths with a learned kernel transform."""
    return RunConfig(
        output_dir="runs/gradcheck",
        data=SyntheticDataConfig(input_dim=8, class_pool_size=20, cluster_spread=1.0, center_scale=3.0),
        episodes=EpisodeConfig(way=5, shot=1, queries_per_class=2),
        encoder=EncoderConfig(kind="mlp", input_shape=[8], mlp_hidden_sizes=[16, 16], embedding_dim=16),
        kernel=KernelConfig(
            kind="cosine", transform="mlp", transform_hidden_sizes=[16], transform_out_dim=16
        ),
        hypernet=HypernetConfig(neck_depth=1, head_depth=2, hidden_dim=16),
        training=TrainConfig(epochs=1, tasks_per_epoch=10),
    )


def natural() -> RunConfig:
    """Conv4 on RGB image folders at the published natural-image scale."""
    return RunConfig(
        output_dir="runs/natural",
        data=FolderDataConfig(root_path="data/natural", image_size=80, channels=3),
        encoder=EncoderConfig(kind="conv4", input_shape=[3, 80, 80]),
        hypernet=HypernetConfig(neck_depth=2, head_depth=3, hidden_dim=4096),
        training=TrainConfig(learning_rate=1e-3, epochs=10000, tasks_per_epoch=1),
    )


def characters() -> RunConfig:
    """Conv4 on grayscale character images."""
    return RunConfig(
        output_dir="runs/characters",
        data=FolderDataConfig(root_path="data/characters", image_size=32, channels=1),
        encoder=EncoderConfig(kind="conv4", input_shape=[1, 32, 32]),
        hypernet=HypernetConfig(neck_depth=1, head_depth=2, hidden_dim=512, target_hidden_sizes=[128]),
        training=TrainConfig(learning_rate=1e-3, epochs=2000, tasks_per_epoch=1),
    )


PRESETS: dict[str, Callable[[], RunConfig]] = {
    "desk": desk,
    "gradcheck": gradcheck,
    "natural": natural,
    "characters": characters,
}


def get_preset(name: str) -> RunConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    return PRESETS[name]()
