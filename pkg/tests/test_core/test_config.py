"""Tests for ernet.core.config."""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from ernet.core.config import (
    DEFAULT_EXTRACTION_WIDTHS,
    ConfigError,
    ModelConfig,
    TrainConfig,
    load_config,
    write_config,
)
from ernet.data.augment import AugmentationRanges


class TestModelConfig:
    """Verify defaults and validation."""

    def test_defaults(self) -> None:
        config = ModelConfig()
        assert config.stages == (5, 5)
        assert config.gamma == 10.0
        assert config.lam == 1.0
        assert config.extraction_widths == DEFAULT_EXTRACTION_WIDTHS

    @pytest.mark.parametrize(
        ("kwargs", "key"),
        [
            ({"stages_extraction": -1}, "stages"),
            ({"gamma": 0.0}, "gamma"),
            ({"lam": -0.5}, "lambda"),
            ({"ncc_window": 4}, "ncc_window"),
            ({"extraction_widths": (4, 4)}, "extraction_widths"),
            ({"registration_widths": ()}, "registration_widths"),
            ({"dense_width": 0}, "dense_width"),
            ({"regularizer_reduction": "max"}, "regularizer_reduction"),
        ],
    )
    def test_invalid_values_name_the_key(self, kwargs: dict[str, object], key: str) -> None:
        with pytest.raises(ConfigError, match=key):
            ModelConfig(**kwargs)  # type: ignore[arg-type]

    def test_width_divisor_keeps_one_channel(self) -> None:
        config = ModelConfig().with_width_divisor(1000)
        assert min(config.extraction_widths) == 1
        assert config.dense_width == 1

    def test_from_dict_reads_stages_and_lambda(self) -> None:
        config = ModelConfig.from_dict({"stages": [1, 3], "lambda": 10, "gamma": 100})
        assert config.stages == (1, 3)
        assert config.lam == 10.0
        assert config.gamma == 100

    def test_from_dict_unknown_key(self) -> None:
        with pytest.raises(ConfigError, match="model.depth"):
            ModelConfig.from_dict({"depth": 3})

    def test_from_dict_bad_stages(self) -> None:
        with pytest.raises(ConfigError, match="stages"):
            ModelConfig.from_dict({"stages": 5})


class TestTrainConfig:
    """Verify training options."""

    def test_defaults(self) -> None:
        config = TrainConfig()
        assert config.learning_rate == 1e-6
        assert config.augmentation == AugmentationRanges(5.0, 5.0, (0.98, 1.02))

    def test_invalid_learning_rate(self) -> None:
        with pytest.raises(ConfigError, match="learning_rate"):
            TrainConfig(learning_rate=0.0)

    def test_augmentation_preset_by_name(self) -> None:
        config = TrainConfig.from_dict({"augmentation": "cc359"})
        assert config.augmentation.translation == 3.0

    def test_augmentation_mapping(self) -> None:
        config = TrainConfig.from_dict(
            {"augmentation": {"translation": 2, "rotation": 1, "scale": [0.9, 1.1]}}
        )
        assert config.augmentation == AugmentationRanges(2.0, 1.0, (0.9, 1.1))

    def test_augmentation_unknown_key(self) -> None:
        with pytest.raises(ConfigError, match="train.augmentation.shear"):
            TrainConfig.from_dict({"augmentation": {"shear": 1}})

    def test_unknown_key(self) -> None:
        with pytest.raises(ConfigError, match="train.epochs"):
            TrainConfig.from_dict({"epochs": 3})


class TestConfigFiles:
    """Verify JSON/YAML loading and writing."""

    @pytest.mark.parametrize("name", ["config.json", "config.yaml"])
    def test_round_trip(self, tmp_path: Path, name: str) -> None:
        model = ModelConfig(stages_extraction=1, stages_registration=5, lam=10.0)
        train = TrainConfig(iterations=7, seed=3, checkpoint_dir=Path("out"))
        path = tmp_path / name
        write_config(path, model, train)
        assert load_config(path) == (model, train)

    def test_missing_sections_use_defaults(self, tmp_path: Path) -> None:
        path = tmp_path / "c.json"
        path.write_text("{}")
        assert load_config(path) == (ModelConfig(), TrainConfig())

    def test_unknown_section(self, tmp_path: Path) -> None:
        path = tmp_path / "c.json"
        path.write_text(json.dumps({"data": {}}))
        with pytest.raises(ConfigError, match="data"):
            load_config(path)

    def test_invalid_yaml(self, tmp_path: Path) -> None:
        path = tmp_path / "c.yaml"
        path.write_text("model: [unclosed")
        with pytest.raises(ConfigError, match="not valid"):
            load_config(path)

    def test_missing_file(self, tmp_path: Path) -> None:
        with pytest.raises(ConfigError, match="Cannot read"):
            load_config(tmp_path / "absent.json")

    def test_top_level_must_be_mapping(self, tmp_path: Path) -> None:
        path = tmp_path / "c.json"
        path.write_text("[1, 2]")
        with pytest.raises(ConfigError, match="mapping"):
            load_config(path)
