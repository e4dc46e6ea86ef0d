"""Tests for ernet.core.pipeline."""

from __future__ import annotations

from typing import TYPE_CHECKING

import numpy as np
import pytest

from ernet.core.config import ModelConfig
from ernet.core.geometry import AffineTransform
from ernet.core.models import Mode
from ernet.core.pipeline import (
    CHECKPOINT_NAME,
    MANIFEST_NAME,
    ErnetModel,
    evaluate,
    evaluate_pair,
    forward,
    infer,
    load_model,
    resolve_workers,
    run_parallel,
    save_model,
    summarize,
    write_inference,
)
from ernet.refcheck.oracles import OracleMaskNet, OracleTransformNet
from ernet.tensorcore import CheckpointError, DiffTensor, ShapeError, save_checkpoint

if TYPE_CHECKING:
    from pathlib import Path

    from ernet.data.dataset import ImagePair


def _oracle_model(pair: ImagePair, stages: tuple[int, int] = (2, 2)) -> ErnetModel:
    assert pair.mask is not None and pair.truth_transform is not None
    config = ModelConfig(stages_extraction=stages[0], stages_registration=stages[1])
    return ErnetModel(
        config,
        extraction=OracleMaskNet(pair.mask.values),
        registration=OracleTransformNet(pair.truth_transform, max(stages[1], 1)),
    )


class TestErnetModel:
    """Verify parameter bookkeeping."""

    def test_trainable_parameters_follow_enabled_modules(
        self, small_model_config: ModelConfig
    ) -> None:
        import dataclasses

        model = ErnetModel(dataclasses.replace(small_model_config, stages_registration=0))
        names = model.trainable_parameters()
        assert names
        assert all(name.startswith("ext.") for name in names)

    def test_same_seed_same_weights(self, small_model_config: ModelConfig) -> None:
        a = ErnetModel(small_model_config, seed=4).state_arrays()
        b = ErnetModel(small_model_config, seed=4).state_arrays()
        for name in a:
            np.testing.assert_array_equal(a[name], b[name])

    def test_save_and_load_round_trip(
        self, tmp_path: Path, small_model_config: ModelConfig
    ) -> None:
        model = ErnetModel(small_model_config, seed=1)
        save_model(model, tmp_path / "m")
        assert (tmp_path / "m" / CHECKPOINT_NAME).is_file()
        assert (tmp_path / "m" / MANIFEST_NAME).is_file()
        loaded = load_model(tmp_path / "m")
        assert loaded.config == model.config
        for name, values in model.state_arrays().items():
            np.testing.assert_array_equal(loaded.state_arrays()[name], values)

    def test_load_without_config_raises(self, tmp_path: Path) -> None:
        path = tmp_path / "bare.ern"
        save_checkpoint(path, {"w": np.zeros(2)})
        with pytest.raises(CheckpointError, match="no model configuration"):
            load_model(path)

    def test_load_mismatched_parameters_raises(self, small_model_config: ModelConfig) -> None:
        model = ErnetModel(small_model_config)
        with pytest.raises(CheckpointError, match="do not match"):
            model.load_state_arrays({"ext.head.bias": np.zeros(1)})


class TestForward:
    """Verify the end-to-end forward pass."""

    def test_train_mode_attaches_loss(
        self, tiny_pairs: list[ImagePair], small_model_config: ModelConfig
    ) -> None:
        pair = tiny_pairs[0]
        result = forward(ErnetModel(small_model_config), pair.source, pair.target, Mode.train)
        assert result.loss is not None
        assert result.loss.graph is not None
        assert result.output.shape == pair.source.extents

    def test_infer_mode_has_no_loss(
        self, tiny_pairs: list[ImagePair], small_model_config: ModelConfig
    ) -> None:
        pair = tiny_pairs[0]
        result = forward(ErnetModel(small_model_config), pair.source, pair.target, Mode.infer)
        assert result.loss is None

    def test_shape_mismatch(self, small_model_config: ModelConfig) -> None:
        with pytest.raises(ShapeError, match="Shape mismatch"):
            forward(ErnetModel(small_model_config), DiffTensor(np.zeros((8, 8, 8))),
                    DiffTensor(np.zeros((8, 8, 4))))

    def test_zero_stages_returns_source(self, tiny_pairs: list[ImagePair]) -> None:
        config = ModelConfig(stages_extraction=0, stages_registration=0).with_width_divisor(16)
        pair = tiny_pairs[0]
        result = infer(ErnetModel(config), pair.source, pair.target)
        np.testing.assert_array_equal(result.warped, pair.source.values)
        np.testing.assert_array_equal(result.mask, 1.0)
        assert result.transform == AffineTransform.identity()

    def test_oracles_recover_truth(self, phantom_pairs: list[ImagePair]) -> None:
        pair = phantom_pairs[0]
        assert pair.truth_transform is not None and pair.mask is not None
        result = infer(_oracle_model(pair, (2, 3)), pair.source, pair.target)
        np.testing.assert_array_equal(result.mask, np.rint(pair.mask.values))
        np.testing.assert_allclose(result.transform.as_array(),
                                   pair.truth_transform.as_array(), atol=1e-8)
        assert len(result.stage_masks) == 2
        assert len(result.stage_warps) == 3


class TestWriteInference:
    """Verify inference artifacts on disk."""

    def test_writes_volumes_and_transforms(
        self, tmp_path: Path, tiny_pairs: list[ImagePair], small_model_config: ModelConfig
    ) -> None:
        pair = tiny_pairs[0]
        result = infer(ErnetModel(small_model_config), pair.source, pair.target)
        written = write_inference(result, tmp_path / "out")
        names = {p.name for p in written}
        assert {"extracted.rvol", "mask.rvol", "warped.rvol", "mask_stage1.rvol",
                "warp_stage1.rvol", "transform_normalized.txt", "transform_voxel.txt"} == names
        assert all(p.is_file() for p in written)


class TestEvaluate:
    """Verify metrics, summaries and pair skipping."""

    def test_oracle_scores_are_near_perfect(self, phantom_pairs: list[ImagePair]) -> None:
        for pair in phantom_pairs:
            report = evaluate_pair(_oracle_model(pair), pair)
            assert report.dice_ext >= 0.99
            assert report.dice_reg >= 0.99
            assert report.translation_error is not None
            assert report.translation_error < 1e-6

    def test_pair_without_truth_is_skipped(
        self, tiny_pairs: list[ImagePair], small_model_config: ModelConfig
    ) -> None:
        import dataclasses

        bare = dataclasses.replace(tiny_pairs[1], mask=None)
        report = evaluate(ErnetModel(small_model_config), [tiny_pairs[0], bare])
        assert report.summary.pair_count == 1
        assert report.summary.skipped == (bare.pair_id,)

    def test_degenerate_flag(self, tiny_pairs: list[ImagePair]) -> None:
        config = ModelConfig(stages_extraction=0, stages_registration=0).with_width_divisor(16)
        report = evaluate(ErnetModel(config), tiny_pairs)
        assert report.summary.degenerate
        assert report.stages == (0, 0)

    def test_parallel_matches_serial(
        self, tiny_pairs: list[ImagePair], small_model_config: ModelConfig
    ) -> None:
        model = ErnetModel(small_model_config)
        serial = evaluate(model, tiny_pairs, workers=1)
        parallel = evaluate(model, tiny_pairs, workers=2)
        assert serial.records == parallel.records

    def test_evaluate_pair_needs_truth(
        self, tiny_pairs: list[ImagePair], small_model_config: ModelConfig
    ) -> None:
        import dataclasses

        bare = dataclasses.replace(tiny_pairs[0], labels=None)
        with pytest.raises(ValueError, match="ground-truth"):
            evaluate_pair(ErnetModel(small_model_config), bare)

    def test_summarize_statistics(self, phantom_pairs: list[ImagePair]) -> None:
        records = [evaluate_pair(_oracle_model(p), p) for p in phantom_pairs]
        summary = summarize(records)
        assert summary.pair_count == 2
        assert summary.dice_ext is not None
        assert summary.dice_ext.count == 2
        assert summary.dice_ext.std >= 0.0


class TestWorkers:
    """Verify worker resolution and ordered mapping."""

    def test_explicit_count(self) -> None:
        assert resolve_workers(3) == 3

    def test_auto_is_capped(self) -> None:
        assert 1 <= resolve_workers(0) <= 32

    def test_order_is_preserved(self) -> None:
        assert run_parallel(list(range(10)), lambda x: x * x, 4) == [x * x for x in range(10)]
