import os

import pytest

os.environ["NEURALMVS_DEVICE"] = "cpu"
os.environ["NEURALMVS_LOG_LEVEL"] = "WARNING"
os.environ.pop("NEURALMVS_SEED", None)

from src.config import TrainConfig
from src.services.scene_io import generate_toy_scene
from src.services.trainer import Trainer
from src.types import ToySceneSpec


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running acceptance experiment (set NEURALMVS_RUN_SLOW=1)")


def pytest_collection_modifyitems(config, items):
    if os.getenv("NEURALMVS_RUN_SLOW") == "1":
        return
    skip_slow = pytest.mark.skip(reason="set NEURALMVS_RUN_SLOW=1 to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(autouse=True)
def diagnostics_dir(tmp_path, monkeypatch):
    from src.services.diagnostics import diagnostics
    monkeypatch.setattr(diagnostics, "directory", tmp_path / "diagnostics")
    return tmp_path / "diagnostics"


@pytest.fixture(scope="session")
def small_spec():
    return ToySceneSpec(primitive="sphere", num_views=8, resolution=(32, 32), seed=0)


@pytest.fixture(scope="session")
def toy_scene(small_spec):
    """(dataset, depth maps) of an 8-view 32x32 sphere scene."""
    return generate_toy_scene(small_spec)


@pytest.fixture(scope="session")
def toy_dataset(toy_scene):
    return toy_scene[0]


@pytest.fixture(scope="session")
def toy_dir(tmp_path_factory, small_spec):
    out = tmp_path_factory.mktemp("toy_scene")
    generate_toy_scene(small_spec, out)
    return out


@pytest.fixture
def tiny_config():
    return TrainConfig(
        steps=2,
        schedule=[[4, 1], [2, 1], [1, 1]],
        num_frequencies=2,
        checkpoint_every=0,
        log_every=0,
    )


@pytest.fixture
def cpu_trainer():
    return Trainer(device="cpu")
