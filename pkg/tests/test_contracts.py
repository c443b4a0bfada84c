"""Test configuration contracts and validation."""

import pytest
from pydantic import ValidationError

from khn.config import RuntimeConfig
from khn.errors import ConfigError
from khn.models.presets import PRESETS, get_preset
from khn.models.schemas import (
    DescribedDataConfig,
    EncoderConfig,
    FinetuneConfig,
    FolderDataConfig,
    RunConfig,
    SplitFractions,
    SyntheticDataConfig,
    TrainConfig,
)


def test_run_config_defaults():
    """Test the default run is a 5-way 1-shot synthetic task."""
    config = RunConfig()
    assert config.episodes.way == 5
    assert config.episodes.shot == 1
    assert config.episodes.queries_per_class == 16
    assert config.aggregation == "averaged"
    assert config.target.input_dim == 5


def test_unknown_keys_rejected():
    """Test that every level forbids extra keys."""
    with pytest.raises(ValidationError) as info:
        RunConfig.model_validate({"seed": 1, "bogus": True})
    assert info.value.errors()[0]["loc"] == ("bogus",)
    with pytest.raises(ValidationError):
        RunConfig.model_validate({"training": {"learning_rate": 1e-3, "lr": 1e-3}})


def test_data_union_discriminates_on_kind():
    """Test the data union selects its model by kind."""
    config = RunConfig.model_validate(
        {
            "data": {"kind": "described", "path": "data/dataset.json"},
            "encoder": {"input_shape": [16]},
        }
    )
    assert isinstance(config.data, DescribedDataConfig)
    with pytest.raises(ValidationError):
        RunConfig.model_validate({"data": {"kind": "imagenet"}})


def test_encoder_input_must_match_data():
    """Test the encoder input shape must match the data source."""
    with pytest.raises(ValidationError):
        RunConfig(data=SyntheticDataConfig(input_dim=8), encoder=EncoderConfig(input_shape=[16]))
    with pytest.raises(ValidationError):
        RunConfig(
            data=FolderDataConfig(root_path="x", image_size=32, channels=3),
            encoder=EncoderConfig(kind="conv4", input_shape=[1, 32, 32]),
        )


def test_conv4_embedding_dim_resolved():
    """Test the Conv4 embedding width follows the input size."""
    assert EncoderConfig(kind="conv4", input_shape=[3, 80, 80]).output_dim == 64 * 5 * 5
    with pytest.raises(ValidationError):
        EncoderConfig(kind="conv4", input_shape=[1, 32, 32], embedding_dim=10)
    with pytest.raises(ValidationError):
        EncoderConfig(kind="mlp", input_shape=[1, 32, 32])


def test_synthetic_bounds():
    """Test synthetic data parameters are range checked."""
    with pytest.raises(ValidationError):
        SyntheticDataConfig(class_pool_size=0)
    with pytest.raises(ValidationError):
        SyntheticDataConfig(cluster_spread=-0.5)
    with pytest.raises(ValidationError):
        SyntheticDataConfig(center_scale=0.0)
    assert SyntheticDataConfig(cluster_spread=0.0).cluster_spread == 0.0


def test_split_fractions_sum_to_one():
    """Test split fractions must sum to one."""
    with pytest.raises(ValidationError):
        SplitFractions(train=0.5, val=0.2, test=0.2)
    assert SplitFractions(train=0.8, val=0.0, test=0.2).val == 0.0


def test_training_bounds():
    """Test the learning rate bound and the derived iteration count."""
    assert TrainConfig(learning_rate=0.0).learning_rate == 0.0
    with pytest.raises(ValidationError):
        TrainConfig(learning_rate=-1e-3)
    assert TrainConfig(epochs=3, tasks_per_epoch=7).iterations == 21


def test_finetune_groups():
    """Test finetune flags select the tuned groups and steps are bounded."""
    assert FinetuneConfig().groups == ["encoder", "hypernet", "kernel"]
    assert FinetuneConfig(tune_encoder=False, tune_kernel=False).groups == ["hypernet"]
    with pytest.raises(ValidationError):
        FinetuneConfig(steps=-1)


def test_config_json_round_trip(small_config):
    """Test a config survives a JSON round trip."""
    assert RunConfig.model_validate_json(small_config.model_dump_json()) == small_config


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_presets_validate(name):
    """Test every preset validates."""
    config = get_preset(name)
    assert RunConfig.model_validate(config.model_dump()) == config


def test_natural_preset_scale():
    """Test the image preset uses Conv4 at its documented scale."""
    config = get_preset("natural")
    assert config.encoder.output_dim == 1600
    assert config.hypernet.neck_depth == 2 and config.hypernet.head_depth == 3
    assert config.hypernet.hidden_dim == 4096


def test_unknown_preset():
    """Test an unknown preset name is a configuration error."""
    with pytest.raises(ConfigError):
        get_preset("imagenet")


def test_runtime_config_from_env(monkeypatch):
    """Test runtime settings are read from KHN_ environment variables."""
    monkeypatch.setenv("KHN_THREADS", "4")
    monkeypatch.setenv("KHN_LOG_LEVEL", "debug")
    monkeypatch.delenv("KHN_DATABASE_URL", raising=False)
    config = RuntimeConfig.from_env()
    assert config.threads == 4
    assert config.log_level == "DEBUG"
    assert config.ledger_url("runs/a") == "sqlite:///runs/a/ledger.db"


def test_negative_seeds_rejected():
    """Test negative seeds fail validation."""
    with pytest.raises(ValidationError):
        RunConfig(seed=-1)
    with pytest.raises(ValidationError):
        SyntheticDataConfig(seed=-1)
    assert RunConfig(seed=0).seed == 0
