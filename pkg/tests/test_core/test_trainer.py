"""Tests for ernet.core.trainer."""

from __future__ import annotations

import csv
import dataclasses
from typing import TYPE_CHECKING

import numpy as np
import pytest

from ernet.core.models import Mode
from ernet.core.pipeline import CHECKPOINT_NAME, ErnetModel, forward, load_model
from ernet.core.trainer import (
    BEST_DIR,
    FINAL_DIR,
    LOG_COLUMNS,
    STATE_NAME,
    NonFiniteLossError,
    train,
)
from ernet.tensorcore import CheckpointError, no_grad

if TYPE_CHECKING:
    from pathlib import Path

    from ernet.core.config import ModelConfig, TrainConfig
    from ernet.core.models import TrainRecord
    from ernet.data.dataset import ImagePair


class TestTrain:
    """Verify the optimization loop and its outputs."""

    def test_records_every_iteration(
        self,
        tiny_pairs: list[ImagePair],
        small_model_config: ModelConfig,
        fast_train_config: TrainConfig,
    ) -> None:
        log = train(ErnetModel(small_model_config), tiny_pairs, fast_train_config)
        assert [r.iteration for r in log.records] == [1, 2, 3]
        assert all(np.isfinite(r.total) for r in log.records)

    def test_parameters_change(
        self,
        tiny_pairs: list[ImagePair],
        small_model_config: ModelConfig,
        fast_train_config: TrainConfig,
    ) -> None:
        model = ErnetModel(small_model_config)
        before = model.state_arrays()
        train(model, tiny_pairs, fast_train_config)
        after = model.state_arrays()
        assert any(not np.array_equal(before[k], after[k]) for k in before)

    def test_loss_decreases_on_a_fixed_pair(
        self,
        tiny_pairs: list[ImagePair],
        small_model_config: ModelConfig,
        fast_train_config: TrainConfig,
    ) -> None:
        pair = tiny_pairs[0]
        model = ErnetModel(small_model_config, seed=0)

        def loss() -> float:
            with no_grad():
                result = forward(model, pair.source, pair.target, Mode.train).loss
            assert result is not None
            return result.total

        before = loss()
        config = dataclasses.replace(
            fast_train_config, iterations=10, validate_every=0, checkpoint_every=0
        )
        log = train(model, [pair], config)
        assert len(log.records) == 10
        assert log.records[-1].total < log.records[0].total
        assert loss() < before

    def test_writes_checkpoints(
        self,
        tiny_pairs: list[ImagePair],
        small_model_config: ModelConfig,
        fast_train_config: TrainConfig,
    ) -> None:
        log = train(ErnetModel(small_model_config), tiny_pairs, fast_train_config,
                    val_pairs=tiny_pairs)
        root = fast_train_config.checkpoint_dir
        assert (root / STATE_NAME).is_file()
        assert (root / FINAL_DIR / CHECKPOINT_NAME).is_file()
        assert (root / BEST_DIR / CHECKPOINT_NAME).is_file()
        assert log.best_iteration in (2, 3)
        assert log.best_score is not None
        assert load_model(root / FINAL_DIR).config == small_model_config

    def test_validation_only_on_schedule(
        self,
        tiny_pairs: list[ImagePair],
        small_model_config: ModelConfig,
        fast_train_config: TrainConfig,
    ) -> None:
        log = train(ErnetModel(small_model_config), tiny_pairs, fast_train_config,
                    val_pairs=tiny_pairs)
        validated = [r.iteration for r in log.records if r.val_dice_ext is not None]
        assert validated == [2, 3]

    def test_progress_callback(
        self,
        tiny_pairs: list[ImagePair],
        small_model_config: ModelConfig,
        fast_train_config: TrainConfig,
    ) -> None:
        seen: list[TrainRecord] = []
        train(ErnetModel(small_model_config), tiny_pairs, fast_train_config, progress=seen.append)
        assert len(seen) == 3

    def test_writes_log_csv(
        self,
        tmp_path: Path,
        tiny_pairs: list[ImagePair],
        small_model_config: ModelConfig,
        fast_train_config: TrainConfig,
    ) -> None:
        log_path = tmp_path / "log.csv"
        train(ErnetModel(small_model_config), tiny_pairs, fast_train_config, log_path=log_path)
        with log_path.open(newline="") as f:
            rows = list(csv.reader(f))
        assert tuple(rows[0]) == LOG_COLUMNS
        assert len(rows) == 4
        assert rows[1][4] == ""

    def test_empty_pairs(
        self, small_model_config: ModelConfig, fast_train_config: TrainConfig
    ) -> None:
        with pytest.raises(ValueError, match="at least one pair"):
            train(ErnetModel(small_model_config), [], fast_train_config)

    def test_non_finite_loss(
        self,
        tiny_pairs: list[ImagePair],
        small_model_config: ModelConfig,
        fast_train_config: TrainConfig,
    ) -> None:
        pair = tiny_pairs[0]
        poisoned = dataclasses.replace(
            pair, source=pair.source.with_values(np.full(pair.source.extents, np.nan))
        )
        with pytest.raises(NonFiniteLossError, match="iteration 1"):
            train(ErnetModel(small_model_config), [poisoned], fast_train_config)

    def test_zero_stages_runs_without_updates(
        self, tiny_pairs: list[ImagePair], fast_train_config: TrainConfig,
        small_model_config: ModelConfig,
    ) -> None:
        config = dataclasses.replace(
            small_model_config, stages_extraction=0, stages_registration=0
        )
        model = ErnetModel(config)
        before = model.state_arrays()
        log = train(model, tiny_pairs, fast_train_config)
        assert len(log.records) == 3
        for name, values in model.state_arrays().items():
            np.testing.assert_array_equal(values, before[name])


class TestResume:
    """Verify that a resumed run continues exactly."""

    def test_resume_matches_uninterrupted_run(
        self,
        tmp_path: Path,
        tiny_pairs: list[ImagePair],
        small_model_config: ModelConfig,
        fast_train_config: TrainConfig,
    ) -> None:
        straight = ErnetModel(small_model_config)
        train(straight, tiny_pairs,
              dataclasses.replace(fast_train_config, checkpoint_dir=tmp_path / "a"))

        first = dataclasses.replace(
            fast_train_config, iterations=2, checkpoint_dir=tmp_path / "b"
        )
        train(ErnetModel(small_model_config), tiny_pairs, first)
        resumed = ErnetModel(small_model_config, seed=99)
        log = train(
            resumed,
            tiny_pairs,
            dataclasses.replace(fast_train_config, checkpoint_dir=tmp_path / "c"),
            resume=tmp_path / "b" / STATE_NAME,
        )
        assert [r.iteration for r in log.records] == [1, 2, 3]
        for name, values in straight.state_arrays().items():
            np.testing.assert_array_equal(resumed.state_arrays()[name], values)

    def test_resume_with_other_config_raises(
        self,
        tmp_path: Path,
        tiny_pairs: list[ImagePair],
        small_model_config: ModelConfig,
        fast_train_config: TrainConfig,
    ) -> None:
        train(ErnetModel(small_model_config), tiny_pairs, fast_train_config)
        other = dataclasses.replace(small_model_config, lam=5.0)
        with pytest.raises(CheckpointError, match="different model configuration"):
            train(ErnetModel(other), tiny_pairs, fast_train_config,
                  resume=fast_train_config.checkpoint_dir / STATE_NAME)
