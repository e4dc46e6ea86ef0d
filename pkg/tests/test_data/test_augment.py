"""Tests for ernet.data.augment."""

from __future__ import annotations

import numpy as np
import pytest

from ernet.core.geometry import AffineTransform, CoordinateFrame, compose, invert, warp_labels
from ernet.data.augment import (
    PRESETS,
    AugmentationRanges,
    augment_pair,
    preset,
    random_affine,
    rotation_matrix,
)
from ernet.data.dataset import ImagePair
from ernet.data.volume import Volume

EXTENT = 32


def _sphere_pair() -> ImagePair:
    frame = CoordinateFrame((EXTENT,) * 3)
    idx = np.indices(frame.extents) - (EXTENT - 1) / 2.0
    labels = ((idx**2).sum(axis=0) <= 10.0**2).astype(np.float64)
    return ImagePair(
        pair_id="sphere",
        source=Volume(labels * 0.8),
        target=Volume(labels * 0.8),
        mask=Volume(labels, dtype="uint8"),
        labels=Volume(labels, dtype="int16"),
        target_labels=Volume(labels, dtype="int16"),
        truth_transform=AffineTransform.identity(),
    )


class TestRanges:
    """Verify range validation and presets."""

    def test_presets(self) -> None:
        assert preset("lpba40") == AugmentationRanges(5.0, 5.0, (0.98, 1.02))
        assert preset("cc359") == AugmentationRanges(3.0, 3.0, (0.99, 1.01))
        assert preset("none").is_identity

    def test_unknown_preset(self) -> None:
        with pytest.raises(ValueError, match="Choose from: lpba40, cc359, none"):
            preset("oasis")

    def test_negative_range(self) -> None:
        with pytest.raises(ValueError, match="non-negative"):
            AugmentationRanges(translation=-1.0)

    def test_bad_scale(self) -> None:
        with pytest.raises(ValueError, match="scale interval"):
            AugmentationRanges(scale=(1.1, 1.0))


class TestRandomAffine:
    """Verify sampled transforms stay inside their ranges."""

    def test_rotation_is_orthonormal(self) -> None:
        r = rotation_matrix(np.array([4.0, -3.0, 2.5]))
        np.testing.assert_allclose(r @ r.T, np.eye(3), atol=1e-12)
        assert np.linalg.det(r) == pytest.approx(1.0)

    def test_translation_bound_in_voxels(self) -> None:
        frame = CoordinateFrame((32, 48, 40))
        ranges = AugmentationRanges(translation=5.0, rotation=0.0, scale=(1.0, 1.0))
        rng = np.random.default_rng(0)
        for _ in range(20):
            t = random_affine(ranges, rng, frame)
            np.testing.assert_allclose(t.matrix()[:3, :3], np.eye(3))
            assert np.all(np.abs(t.translation() * frame.half_extents) <= 5.0 + 1e-12)

    def test_scale_bound(self) -> None:
        frame = CoordinateFrame((EXTENT,) * 3)
        ranges = AugmentationRanges(translation=0.0, rotation=0.0, scale=(0.98, 1.02))
        rng = np.random.default_rng(1)
        for _ in range(20):
            diag = np.diag(random_affine(ranges, rng, frame).matrix()[:3, :3])
            assert np.all((diag >= 0.98) & (diag <= 1.02))
            assert diag[0] == pytest.approx(diag[1])

    def test_consumes_seven_draws(self) -> None:
        frame = CoordinateFrame((EXTENT,) * 3)
        sampled = np.random.default_rng(5)
        random_affine(PRESETS["lpba40"], sampled, frame)
        reference = np.random.default_rng(5)
        reference.uniform(size=7)
        assert sampled.uniform() == reference.uniform()


class TestAugmentPair:
    """Verify the truth transform follows the augmented source."""

    def test_identity_ranges_return_pair(self) -> None:
        pair = _sphere_pair()
        assert augment_pair(pair, preset("none"), np.random.default_rng(0)) is pair

    def test_truth_is_updated(self) -> None:
        pair = _sphere_pair()
        ranges = preset("lpba40")
        q = random_affine(ranges, np.random.default_rng(3), pair.frame)
        augmented = augment_pair(pair, ranges, np.random.default_rng(3))
        assert augmented.truth_transform is not None
        expected = compose(AffineTransform.identity(), invert(q))
        np.testing.assert_allclose(
            augmented.truth_transform.as_array(), expected.as_array(), atol=1e-12
        )

    def test_truth_unwarps_labels(self) -> None:
        pair = _sphere_pair()
        augmented = augment_pair(pair, preset("lpba40"), np.random.default_rng(7))
        assert augmented.labels is not None
        assert augmented.truth_transform is not None
        restored = warp_labels(
            augmented.labels.values.astype(np.int64), augmented.truth_transform, pair.frame
        )
        assert pair.labels is not None
        original = pair.labels.values
        overlap = np.logical_and(restored > 0, original > 0).sum()
        dice = 2 * overlap / ((restored > 0).sum() + (original > 0).sum())
        assert dice > 0.95

    def test_target_is_untouched(self) -> None:
        pair = _sphere_pair()
        augmented = augment_pair(pair, preset("lpba40"), np.random.default_rng(2))
        assert augmented.target is pair.target
        assert augmented.target_labels is pair.target_labels
        assert augmented.mask is not None
        assert set(np.unique(augmented.mask.values)) <= {0.0, 1.0}
