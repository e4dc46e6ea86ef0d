"""Shared test fixtures for ernet."""

from __future__ import annotations

from typing import TYPE_CHECKING

import numpy as np
import pytest
from scipy import ndimage

from ernet.core.config import ModelConfig, TrainConfig
from ernet.core.geometry import AffineTransform, CoordinateFrame, warp_labels, warp_values
from ernet.data.augment import preset
from ernet.data.dataset import ImagePair, pairs_from_phantoms
from ernet.data.volume import Volume

if TYPE_CHECKING:
    from pathlib import Path

TINY_EXTENT = 8


def _tiny_pair(seed: int) -> ImagePair:
    """An 8^3 pair: a smooth blob inside a box, shifted by a known translation."""
    rng = np.random.default_rng(seed)
    frame = CoordinateFrame((TINY_EXTENT,) * 3)
    idx = np.indices(frame.extents) - (TINY_EXTENT - 1) / 2.0
    labels = np.where((idx**2).sum(axis=0) <= 6.5, 1, 0).astype(np.int64)
    labels[(idx[0] > 0) & (labels == 1)] = 2
    head = ndimage.gaussian_filter(labels * 0.4 + rng.uniform(0, 0.05, frame.extents), 0.6)
    head = (head - head.min()) / (head.max() - head.min())
    truth = AffineTransform((1, 0, 0, 0.08, 0, 1, 0, 0, 0, 0, 1, -0.05))
    source = warp_values(head, truth, frame)
    source_labels = warp_labels(labels, truth, frame)
    return ImagePair(
        pair_id=f"tiny_{seed}",
        source=Volume(source),
        target=Volume(head),
        mask=Volume((source_labels > 0).astype(np.float64), dtype="uint8"),
        labels=Volume(source_labels.astype(np.float64), dtype="int16"),
        target_labels=Volume(labels.astype(np.float64), dtype="int16"),
        truth_transform=AffineTransform((1, 0, 0, -0.08, 0, 1, 0, 0, 0, 0, 1, 0.05)),
    )


@pytest.fixture
def tiny_pairs() -> list[ImagePair]:
    """Two 8^3 pairs with full ground truth."""
    return [_tiny_pair(0), _tiny_pair(1)]


@pytest.fixture
def small_model_config() -> ModelConfig:
    """One stage of each module with widths shrunk to a few channels."""
    return ModelConfig(
        stages_extraction=1, stages_registration=1, ncc_window=3
    ).with_width_divisor(8)


@pytest.fixture
def fast_train_config(tmp_path: Path) -> TrainConfig:
    """Three unaugmented iterations with checkpoints under ``tmp_path``."""
    return TrainConfig(
        learning_rate=1e-3,
        iterations=3,
        augmentation=preset("none"),
        validate_every=2,
        checkpoint_every=2,
        log_every=1,
        checkpoint_dir=tmp_path / "ckpt",
    )


@pytest.fixture(scope="session")
def phantom_pairs() -> list[ImagePair]:
    """Two 32^3 phantoms (seeds 0 and 1)."""
    return pairs_from_phantoms([0, 1])
