"""Random affine augmentation in the normalized-centered frame."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import TYPE_CHECKING

import numpy as np

from ernet.core.geometry import AffineTransform, compose, invert, warp_labels, warp_values

if TYPE_CHECKING:
    from numpy.typing import NDArray

    from ernet.core.geometry import CoordinateFrame
    from ernet.data.dataset import ImagePair


@dataclass(frozen=True)
class AugmentationRanges:
    """Uniform sampling ranges for translation, rotation and isotropic scale.

    Attributes:
        translation: Maximum absolute translation per axis, in voxels.
        rotation: Maximum absolute Euler angle per axis, in degrees.
        scale: Closed interval for the isotropic scale factor.
    """

    translation: float = 5.0
    rotation: float = 5.0
    scale: tuple[float, float] = (0.98, 1.02)

    def __post_init__(self) -> None:
        if self.translation < 0 or self.rotation < 0:
            msg = "translation and rotation ranges must be non-negative"
            raise ValueError(msg)
        lo, hi = self.scale
        if not 0 < lo <= hi:
            msg = f"scale interval must satisfy 0 < low <= high, got {self.scale}"
            raise ValueError(msg)

    @property
    def is_identity(self) -> bool:
        return self.translation == 0 and self.rotation == 0 and self.scale == (1.0, 1.0)


PRESETS: dict[str, AugmentationRanges] = {
    "lpba40": AugmentationRanges(translation=5.0, rotation=5.0, scale=(0.98, 1.02)),
    "cc359": AugmentationRanges(translation=3.0, rotation=3.0, scale=(0.99, 1.01)),
    "none": AugmentationRanges(translation=0.0, rotation=0.0, scale=(1.0, 1.0)),
}


def preset(name: str) -> AugmentationRanges:
    """Look up a named range preset (``lpba40``, ``cc359`` or ``none``)."""
    try:
        return PRESETS[name]
    except KeyError:
        valid = ", ".join(PRESETS)
        msg = f"Unknown augmentation preset '{name}'. Choose from: {valid}"
        raise ValueError(msg) from None


def rotation_matrix(angles_deg: np.ndarray) -> np.ndarray:
    """Rotation ``Rz @ Ry @ Rx`` from three Euler angles in degrees."""
    ax, ay, az = (math.radians(float(a)) for a in angles_deg)
    rx = np.array([[1, 0, 0], [0, math.cos(ax), -math.sin(ax)], [0, math.sin(ax), math.cos(ax)]])
    ry = np.array([[math.cos(ay), 0, math.sin(ay)], [0, 1, 0], [-math.sin(ay), 0, math.cos(ay)]])
    rz = np.array([[math.cos(az), -math.sin(az), 0], [math.sin(az), math.cos(az), 0], [0, 0, 1]])
    return rz @ ry @ rx


def random_affine(
    ranges: AugmentationRanges,
    rng: np.random.Generator,
    frame: CoordinateFrame,
) -> AffineTransform:
    """Sample ``scale @ rotation @ translation`` uniformly within *ranges*.

    Translation is drawn in voxels and converted to normalized units of
    *frame*, so the bound holds in voxel space for every axis.  Exactly seven
    draws are consumed from *rng* regardless of the ranges.
    """
    shift_vox = rng.uniform(-1.0, 1.0, size=3) * ranges.translation
    angles = rng.uniform(-1.0, 1.0, size=3) * ranges.rotation
    lo, hi = ranges.scale
    factor = lo + (hi - lo) * rng.uniform(0.0, 1.0)

    translate = np.eye(4)
    translate[:3, 3] = shift_vox / frame.half_extents
    rotate = np.eye(4)
    rotate[:3, :3] = rotation_matrix(angles)
    scale = np.diag([factor, factor, factor, 1.0])
    return AffineTransform.from_matrix(scale @ rotate @ translate)


def _warp_discrete(
    values: NDArray[np.float64], q: AffineTransform, frame: CoordinateFrame
) -> NDArray[np.int64]:
    return warp_labels(np.rint(values).astype(np.int64), q, frame)


def augment_pair(
    pair: ImagePair, ranges: AugmentationRanges, rng: np.random.Generator
) -> ImagePair:
    """Resample the source of *pair* through one random transform ``Q``.

    The source is warped trilinearly and its mask and labels by nearest
    neighbour.  A known truth transform ``T`` becomes ``Q^-1 @ T`` so it still
    aligns the augmented source with the unchanged target.
    """
    frame = pair.frame
    q = random_affine(ranges, rng, frame)
    if ranges.is_identity:
        return pair
    source = pair.source.with_values(warp_values(pair.source.values, q, frame))
    mask = labels = None
    if pair.mask is not None:
        mask = pair.mask.with_values(_warp_discrete(pair.mask.values, q, frame))
    if pair.labels is not None:
        labels = pair.labels.with_values(_warp_discrete(pair.labels.values, q, frame))
    truth = None
    if pair.truth_transform is not None:
        truth = compose(pair.truth_transform, invert(q))
    return replace(pair, source=source, mask=mask, labels=labels, truth_transform=truth)
