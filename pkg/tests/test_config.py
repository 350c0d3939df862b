import json

import pytest
import torch

from src.config import Config, TrainConfig
from src.errors import RejectedConfigurationError
from src.types import MarchSchedule


def test_defaults():
    cfg = TrainConfig()
    cfg.validate()
    assert cfg.march_schedule == MarchSchedule()
    assert cfg.loss_config.lambda_ == cfg.lambda_
    assert cfg.posenc_config.num_frequencies == 10
    assert cfg.toggles.view_selection == "delaunay"


def test_dict_round_trip_uses_lambda_key():
    cfg = TrainConfig(steps=7, lambda_=0.3)
    data = cfg.to_dict()
    assert data["lambda"] == 0.3
    assert "lambda_" not in data
    assert TrainConfig.from_dict(data) == cfg


def test_unknown_fields_rejected():
    with pytest.raises(RejectedConfigurationError):
        TrainConfig.from_dict({"momentum": 0.9})
    with pytest.raises(RejectedConfigurationError):
        TrainConfig.from_dict({"toggles": {"use_attention": True}})


@pytest.mark.parametrize(
    "data",
    [
        {"steps": -1},
        {"learning_rate": 0.0},
        {"toggles": {"conv_kernel": 5}},
        {"toggles": {"view_selection": "random"}},
        {"schedule": [[2, 3], [4, 3], [1, 1]]},
        {"loss_norm": "l1"},
        {"ablation_seeds": [0, "1"]},
        {"ablation_seeds": 3},
    ],
)
def test_invalid_values_rejected(data):
    with pytest.raises(RejectedConfigurationError):
        TrainConfig.from_dict(data)


def test_with_overrides_merges_toggles():
    cfg = TrainConfig().with_overrides({"toggles": {"use_posenc": False}, "seed": 4})
    assert cfg.toggles.use_posenc is False
    assert cfg.toggles.view_selection == "delaunay"
    assert cfg.seed == 4


def test_with_architecture_of_replaces_shape_fields():
    saved = TrainConfig(schedule=[[4, 1], [2, 1], [1, 1]], num_frequencies=2).to_dict()
    requested = TrainConfig(
        steps=5,
        learning_rate=1e-4,
        schedule=[[4, 2], [2, 1], [1, 0]],
        num_frequencies=4,
    ).with_overrides({"toggles": {"conv_kernel": 1, "use_confidence_loss": False}})
    cfg, changed = requested.with_architecture_of(saved)
    assert cfg.schedule == [[4, 1], [2, 1], [1, 1]]
    assert cfg.num_frequencies == 2
    assert cfg.toggles.conv_kernel == 3
    # Optimization fields stay as requested
    assert (cfg.steps, cfg.learning_rate) == (5, 1e-4)
    assert cfg.toggles.use_confidence_loss is False
    assert changed == ["schedule", "num_frequencies", "toggles.conv_kernel"]


def test_with_architecture_of_same_config_changes_nothing():
    cfg = TrainConfig(num_frequencies=3)
    same, changed = cfg.with_architecture_of(cfg.to_dict())
    assert same == cfg
    assert changed == []


def test_ablation_seeds_round_trip():
    cfg = TrainConfig.from_dict({"ablation_seeds": [0, 1, 2]})
    assert cfg.ablation_seeds == [0, 1, 2]
    assert TrainConfig.from_dict(cfg.to_dict()) == cfg
    assert TrainConfig().ablation_seeds == []


def test_load_file_and_seed_override(tmp_path, monkeypatch):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"steps": 3, "seed": 1}))
    assert TrainConfig.load(path).seed == 1
    monkeypatch.setenv("NEURALMVS_SEED", "9")
    cfg = TrainConfig.load(path)
    assert (cfg.steps, cfg.seed) == (3, 9)


def test_load_rejects_bad_json(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text("{steps: 3")
    with pytest.raises(RejectedConfigurationError):
        TrainConfig.load(path)


def test_load_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        TrainConfig.load(tmp_path / "absent.json")


def test_seed_override_must_be_integer(monkeypatch):
    monkeypatch.setenv("NEURALMVS_SEED", "abc")
    with pytest.raises(RejectedConfigurationError):
        Config.seed_override()


def test_device_selection(monkeypatch):
    monkeypatch.setenv("NEURALMVS_DEVICE", "cpu")
    assert Config.device() == torch.device("cpu")
    monkeypatch.setenv("NEURALMVS_DEVICE", "tpu")
    with pytest.raises(RejectedConfigurationError):
        Config.device()
