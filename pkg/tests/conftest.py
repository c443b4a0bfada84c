"""Pytest configuration and fixtures."""

import numpy as np
import pytest

from khn.episodes import SyntheticTaskSource, sample_episode
from khn.models.schemas import (
    EncoderConfig,
    EpisodeConfig,
    HypernetConfig,
    KernelConfig,
    RunConfig,
    SyntheticDataConfig,
    TrainConfig,
)
from khn.networks import HypernetModel


@pytest.fixture
def small_config():
    """Tiny 3-way 2-shot run config on synthetic data."""
    return RunConfig(
        seed=7,
        output_dir="runs/test",
        data=SyntheticDataConfig(
            input_dim=4, class_pool_size=20, cluster_spread=1.0, center_scale=5.0, seed=3
        ),
        episodes=EpisodeConfig(way=3, shot=2, queries_per_class=3),
        encoder=EncoderConfig(kind="mlp", input_shape=[4], mlp_hidden_sizes=[8], embedding_dim=8),
        kernel=KernelConfig(kind="cosine"),
        hypernet=HypernetConfig(neck_depth=1, head_depth=2, hidden_dim=8),
        training=TrainConfig(learning_rate=1e-2, epochs=1, tasks_per_epoch=3),
    )


@pytest.fixture
def gradcheck_config():
    """2-way 1-shot config under 200 parameters with a learned kernel transform."""
    return RunConfig(
        seed=11,
        data=SyntheticDataConfig(
            input_dim=3, class_pool_size=10, cluster_spread=1.0, center_scale=2.0, seed=5
        ),
        episodes=EpisodeConfig(way=2, shot=1, queries_per_class=2),
        encoder=EncoderConfig(kind="mlp", input_shape=[3], mlp_hidden_sizes=[4], embedding_dim=4),
        kernel=KernelConfig(kind="cosine", transform="mlp", transform_hidden_sizes=[], transform_out_dim=4),
        hypernet=HypernetConfig(neck_depth=1, head_depth=2, hidden_dim=4),
    )


@pytest.fixture
def synthetic_source(small_config):
    """Synthetic source matching small_config."""
    return SyntheticTaskSource.from_config(small_config.data)


@pytest.fixture
def small_episode(small_config, synthetic_source):
    """One 3-way 2-shot episode with 3 queries per class."""
    shape = small_config.episodes
    return sample_episode(synthetic_source, shape.way, shape.shot, shape.queries_per_class, 42, split="train")


@pytest.fixture
def small_model(small_config):
    """Freshly initialized model for small_config."""
    return HypernetModel.from_config(small_config)


@pytest.fixture
def rng():
    """Numpy generator for random test data."""
    return np.random.default_rng(1234)
