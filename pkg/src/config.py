import copy
import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import torch
from dotenv import load_dotenv

from .errors import RejectedConfigurationError
from .types import LossConfig, MarchSchedule, PosEncodingConfig
from .utils.constants import (
    DEFAULT_LAMBDA,
    DEFAULT_LEARNING_RATE,
    DEFAULT_NUM_FREQUENCIES,
    DEFAULT_SCHEDULE,
    ViewSelection,
)

load_dotenv()


class Config:
    SEED = os.getenv("NEURALMVS_SEED")
    DEVICE = os.getenv("NEURALMVS_DEVICE", "auto")
    LOG_LEVEL = os.getenv("NEURALMVS_LOG_LEVEL", "INFO")
    DIAGNOSTICS_DIR = os.getenv("NEURALMVS_DIAGNOSTICS_DIR", "diagnostics")

    @classmethod
    def seed_override(cls) -> int | None:
        # Read at call time so a changed environment is honoured
        value = os.getenv("NEURALMVS_SEED", cls.SEED)
        if value is None or not str(value).strip():
            return None
        try:
            return int(value)
        except ValueError:
            raise RejectedConfigurationError(f"NEURALMVS_SEED must be an integer, got {value!r}")

    @classmethod
    def device(cls) -> torch.device:
        name = os.getenv("NEURALMVS_DEVICE", cls.DEVICE)
        if name == "auto":
            return torch.device("cuda" if torch.cuda.is_available() else "cpu")
        if name not in ("cpu", "cuda"):
            raise RejectedConfigurationError(f"NEURALMVS_DEVICE must be cpu, cuda or auto, got {name!r}")
        return torch.device(name)


config = Config()

# Fields that shape the network or its march; a checkpoint fixes them
ARCHITECTURE_FIELDS = ("schedule", "num_frequencies")
ARCHITECTURE_TOGGLES = ("use_posenc", "conv_kernel", "reset_recurrent_between_levels")


@dataclass
class Toggles:
    """Ablation switches."""
    use_posenc: bool = True
    view_selection: str = ViewSelection.DELAUNAY.value
    conv_kernel: int = 3
    reset_recurrent_between_levels: bool = False
    use_confidence_loss: bool = True


@dataclass
class TrainConfig:
    steps: int = 2000
    learning_rate: float = DEFAULT_LEARNING_RATE
    seed: int = 0
    lambda_: float = DEFAULT_LAMBDA
    schedule: list[list[int]] = field(default_factory=lambda: [list(level) for level in DEFAULT_SCHEDULE])
    toggles: Toggles = field(default_factory=Toggles)
    checkpoint_every: int = 500
    eval_every: int = 0
    loss_norm: str = "rms"
    num_frequencies: int = DEFAULT_NUM_FREQUENCIES
    log_every: int = 50
    ablation_seeds: list[int] = field(default_factory=list)

    def validate(self) -> None:
        if self.steps < 0:
            raise RejectedConfigurationError(f"steps must be >= 0, got {self.steps}")
        if self.learning_rate <= 0:
            raise RejectedConfigurationError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.toggles.view_selection not in {v.value for v in ViewSelection}:
            raise RejectedConfigurationError(f"Unknown view_selection: {self.toggles.view_selection}")
        if self.toggles.conv_kernel not in (1, 3):
            raise RejectedConfigurationError(f"conv_kernel must be 1 or 3, got {self.toggles.conv_kernel}")
        if self.checkpoint_every < 0 or self.eval_every < 0:
            raise RejectedConfigurationError("checkpoint_every and eval_every must be >= 0")
        if not isinstance(self.ablation_seeds, list) or not all(
            isinstance(s, int) and not isinstance(s, bool) for s in self.ablation_seeds
        ):
            raise RejectedConfigurationError(f"ablation_seeds must be a list of integers, got {self.ablation_seeds!r}")
        # Constructing these runs their own invariant checks
        self.march_schedule
        self.loss_config
        self.posenc_config

    @property
    def march_schedule(self) -> MarchSchedule:
        return MarchSchedule(tuple(tuple(level) for level in self.schedule))

    @property
    def loss_config(self) -> LossConfig:
        return LossConfig(lambda_=self.lambda_, norm=self.loss_norm)

    @property
    def posenc_config(self) -> PosEncodingConfig:
        return PosEncodingConfig(num_frequencies=self.num_frequencies, include_input=True)

    def to_dict(self) -> dict:
        data = asdict(self)
        data["lambda"] = data.pop("lambda_")
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        data = copy.deepcopy(data)
        known = set(cls.__dataclass_fields__) | {"lambda"}
        unknown = set(data) - known
        if unknown:
            raise RejectedConfigurationError(f"Unknown config fields: {sorted(unknown)}")
        if "lambda" in data:
            data["lambda_"] = data.pop("lambda")
        toggles = data.pop("toggles", {}) or {}
        unknown_toggles = set(toggles) - set(Toggles.__dataclass_fields__)
        if unknown_toggles:
            raise RejectedConfigurationError(f"Unknown toggles: {sorted(unknown_toggles)}")
        cfg = cls(**data, toggles=Toggles(**toggles))
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path: str | Path | None = None) -> "TrainConfig":
        """Load a JSON config file (defaults when path is None); NEURALMVS_SEED overrides the seed."""
        data = {}
        if path is not None:
            path = Path(path)
            if not path.is_file():
                raise FileNotFoundError(f"Config file not found: {path}")
            try:
                data = json.loads(path.read_text())
            except json.JSONDecodeError as e:
                raise RejectedConfigurationError(f"Config file {path} is not valid JSON: {e}")
        cfg = cls.from_dict(data)
        seed = Config.seed_override()
        if seed is not None:
            cfg.seed = seed
        return cfg

    def with_overrides(self, overrides: dict) -> "TrainConfig":
        """Copy with nested overrides applied (toggles merged key by key)."""
        data = self.to_dict()
        for key, value in overrides.items():
            if key == "toggles":
                data["toggles"].update(value)
            else:
                data[key] = copy.deepcopy(value)
        return TrainConfig.from_dict(data)

    def with_architecture_of(self, data: dict) -> tuple["TrainConfig", list[str]]:
        """
        Copy with the architecture fields taken from the config dict `data`.

        Returns the copy and the names of the fields that differed.
        """
        reference = TrainConfig.from_dict(data)
        overrides: dict = {}
        changed = []
        for name in ARCHITECTURE_FIELDS:
            if getattr(self, name) != getattr(reference, name):
                overrides[name] = getattr(reference, name)
                changed.append(name)
        toggles = {}
        for name in ARCHITECTURE_TOGGLES:
            if getattr(self.toggles, name) != getattr(reference.toggles, name):
                toggles[name] = getattr(reference.toggles, name)
                changed.append(f"toggles.{name}")
        if toggles:
            overrides["toggles"] = toggles
        return self.with_overrides(overrides), changed
