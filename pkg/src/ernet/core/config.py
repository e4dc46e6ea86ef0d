"""Model and training configuration: frozen dataclasses plus JSON/YAML files.

A config file has two optional top-level sections::

    {"model": {"stages": [5, 5], "gamma": 10, "lambda": 1, ...},
     "train": {"learning_rate": 1e-6, "iterations": 2000, "seed": 0, ...}}

Unknown keys are rejected with :class:`ConfigError` naming the key.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Literal

import yaml

from ernet.data.augment import PRESETS, AugmentationRanges, preset

RegularizerReduction = Literal["sum", "mean"]

DEFAULT_EXTRACTION_WIDTHS = (16, 32, 32, 64, 64, 64, 32, 32, 32, 16)
DEFAULT_REGISTRATION_WIDTHS = (16, 32, 64, 128, 256, 512)


class ConfigError(ValueError):
    """Raised for malformed configuration files or invalid values."""


@dataclass(frozen=True)
class ModelConfig:
    """Architecture and objective hyperparameters of an ERNet model."""

    stages_extraction: int = 5
    stages_registration: int = 5
    gamma: float = 10.0
    lam: float = 1.0
    ncc_window: int = 9
    extraction_widths: tuple[int, ...] = DEFAULT_EXTRACTION_WIDTHS
    registration_widths: tuple[int, ...] = DEFAULT_REGISTRATION_WIDTHS
    dense_width: int = 128
    head_bias: float = 0.5
    leak: float = 0.2
    regularizer_reduction: RegularizerReduction = "sum"

    def __post_init__(self) -> None:
        if self.stages_extraction < 0 or self.stages_registration < 0:
            msg = "stages: stage counts must be >= 0"
            raise ConfigError(msg)
        if self.gamma <= 0:
            msg = f"gamma: must be positive, got {self.gamma}"
            raise ConfigError(msg)
        if self.lam < 0:
            msg = f"lambda: must be non-negative, got {self.lam}"
            raise ConfigError(msg)
        if self.ncc_window < 1 or self.ncc_window % 2 == 0:
            msg = f"ncc_window: must be a positive odd integer, got {self.ncc_window}"
            raise ConfigError(msg)
        if len(self.extraction_widths) != 10 or min(self.extraction_widths) < 1:
            msg = "extraction_widths: need 10 positive channel counts"
            raise ConfigError(msg)
        if not self.registration_widths or min(self.registration_widths) < 1:
            msg = "registration_widths: need at least one positive channel count"
            raise ConfigError(msg)
        if self.dense_width < 1:
            msg = f"dense_width: must be positive, got {self.dense_width}"
            raise ConfigError(msg)
        if self.regularizer_reduction not in ("sum", "mean"):
            msg = (
                "regularizer_reduction: expected 'sum' or 'mean', "
                f"got {self.regularizer_reduction!r}"
            )
            raise ConfigError(msg)

    @property
    def stages(self) -> tuple[int, int]:
        return self.stages_extraction, self.stages_registration

    def with_width_divisor(self, divisor: int) -> ModelConfig:
        """Shrink every layer width by *divisor* (at least one channel each)."""
        return dataclasses.replace(
            self,
            extraction_widths=tuple(max(1, w // divisor) for w in self.extraction_widths),
            registration_widths=tuple(max(1, w // divisor) for w in self.registration_widths),
            dense_width=max(1, self.dense_width // divisor),
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "stages": [self.stages_extraction, self.stages_registration],
            "gamma": self.gamma,
            "lambda": self.lam,
            "ncc_window": self.ncc_window,
            "extraction_widths": list(self.extraction_widths),
            "registration_widths": list(self.registration_widths),
            "dense_width": self.dense_width,
            "head_bias": self.head_bias,
            "leak": self.leak,
            "regularizer_reduction": self.regularizer_reduction,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ModelConfig:
        """Build from a ``model`` config section.

        Raises:
            ConfigError: On an unknown key or an invalid value.
        """
        data = dict(data)
        kwargs: dict[str, Any] = {}
        if "stages" in data:
            stages = data.pop("stages")
            if not isinstance(stages, list | tuple) or len(stages) != 2:
                msg = f"stages: expected [M, N], got {stages!r}"
                raise ConfigError(msg)
            kwargs["stages_extraction"], kwargs["stages_registration"] = (int(s) for s in stages)
        if "lambda" in data:
            kwargs["lam"] = float(data.pop("lambda"))
        allowed = {f.name for f in dataclasses.fields(cls)} - {"lam"}
        for key, value in data.items():
            if key not in allowed:
                msg = f"model.{key}: unknown configuration key"
                raise ConfigError(msg)
            kwargs[key] = tuple(value) if isinstance(value, list) else value
        return cls(**kwargs)


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer, schedule and bookkeeping for :func:`ernet.core.trainer.train`.

    Every step draws exactly one (source, target) pair.
    """

    learning_rate: float = 1e-6
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    iterations: int = 2000
    seed: int = 0
    augmentation: AugmentationRanges = field(default_factory=lambda: PRESETS["lpba40"])
    validate_every: int = 100
    checkpoint_every: int = 100
    log_every: int = 10
    checkpoint_dir: Path = Path("checkpoints")

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            msg = f"learning_rate: must be positive, got {self.learning_rate}"
            raise ConfigError(msg)
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            msg = "betas: must lie in [0, 1)"
            raise ConfigError(msg)
        if self.iterations < 0:
            msg = f"iterations: must be >= 0, got {self.iterations}"
            raise ConfigError(msg)
        for name in ("validate_every", "checkpoint_every", "log_every"):
            if getattr(self, name) < 0:
                msg = f"{name}: must be >= 0 (0 disables)"
                raise ConfigError(msg)

    def to_dict(self) -> dict[str, Any]:
        return {
            "learning_rate": self.learning_rate,
            "betas": [self.beta1, self.beta2],
            "eps": self.eps,
            "iterations": self.iterations,
            "seed": self.seed,
            "augmentation": {
                "translation": self.augmentation.translation,
                "rotation": self.augmentation.rotation,
                "scale": list(self.augmentation.scale),
            },
            "validate_every": self.validate_every,
            "checkpoint_every": self.checkpoint_every,
            "log_every": self.log_every,
            "checkpoint_dir": str(self.checkpoint_dir),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> TrainConfig:
        """Build from a ``train`` config section.

        ``augmentation`` is either a preset name or a mapping with
        ``translation``, ``rotation`` and ``scale``.

        Raises:
            ConfigError: On an unknown key or an invalid value.
        """
        data = dict(data)
        kwargs: dict[str, Any] = {}
        if "betas" in data:
            betas = data.pop("betas")
            if not isinstance(betas, list | tuple) or len(betas) != 2:
                msg = f"betas: expected [beta1, beta2], got {betas!r}"
                raise ConfigError(msg)
            kwargs["beta1"], kwargs["beta2"] = (float(b) for b in betas)
        if "augmentation" in data:
            kwargs["augmentation"] = _parse_augmentation(data.pop("augmentation"))
        if "checkpoint_dir" in data:
            kwargs["checkpoint_dir"] = Path(data.pop("checkpoint_dir"))
        allowed = {f.name for f in dataclasses.fields(cls)}
        for key, value in data.items():
            if key not in allowed:
                msg = f"train.{key}: unknown configuration key"
                raise ConfigError(msg)
            kwargs[key] = value
        return cls(**kwargs)


def _parse_augmentation(value: Any) -> AugmentationRanges:
    try:
        if isinstance(value, str):
            return preset(value)
        if isinstance(value, dict):
            unknown = set(value) - {"translation", "rotation", "scale"}
            if unknown:
                msg = f"train.augmentation.{sorted(unknown)[0]}: unknown configuration key"
                raise ConfigError(msg)
            scale = value.get("scale", (1.0, 1.0))
            return AugmentationRanges(
                translation=float(value.get("translation", 0.0)),
                rotation=float(value.get("rotation", 0.0)),
                scale=(float(scale[0]), float(scale[1])),
            )
    except ConfigError:
        raise
    except (ValueError, TypeError, IndexError) as exc:
        msg = f"train.augmentation: {exc}"
        raise ConfigError(msg) from exc
    msg = f"train.augmentation: expected a preset name or mapping, got {value!r}"
    raise ConfigError(msg)


def load_config(path: Path) -> tuple[ModelConfig, TrainConfig]:
    """Read a JSON or YAML config file.

    Raises:
        ConfigError: If the file is unreadable, malformed or has unknown keys.
    """
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        msg = f"Cannot read config file {path}: {exc}"
        raise ConfigError(msg) from exc
    try:
        if path.suffix.lower() in (".yaml", ".yml"):
            data = yaml.safe_load(text) or {}
        else:
            data = json.loads(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        msg = f"Config file {path} is not valid: {exc}"
        raise ConfigError(msg) from exc
    if not isinstance(data, dict):
        msg = f"Config file {path} must contain a mapping at top level"
        raise ConfigError(msg)
    unknown = set(data) - {"model", "train"}
    if unknown:
        msg = f"{sorted(unknown)[0]}: unknown configuration section"
        raise ConfigError(msg)
    try:
        model = ModelConfig.from_dict(data.get("model") or {})
        train = TrainConfig.from_dict(data.get("train") or {})
    except TypeError as exc:
        msg = f"Config file {path} has a value of the wrong type: {exc}"
        raise ConfigError(msg) from exc
    return model, train


def write_config(path: Path, model: ModelConfig, train: TrainConfig) -> None:
    """Write both sections; reading the file back yields equal dataclasses."""
    data = {"model": model.to_dict(), "train": train.to_dict()}
    if path.suffix.lower() in (".yaml", ".yml"):
        path.write_text(yaml.safe_dump(data, sort_keys=False), encoding="utf-8")
    else:
        path.write_text(json.dumps(data, indent=2) + "\n", encoding="utf-8")
