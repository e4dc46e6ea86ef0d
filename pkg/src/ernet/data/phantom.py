"""Synthetic head phantoms with known brain mask, labels and alignment.

A phantom lives on a fixed template: an ellipsoidal brain with two interior
structures, a dark gap and a skull shell.  The source is the head resampled
through a random perturbation ``P`` plus noise; the target is the template
brain alone, and the ground-truth transform is ``P^-1``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
from scipy import ndimage

from ernet.core.geometry import CoordinateFrame, invert, sample_coordinates, warp_values
from ernet.data.augment import PRESETS, AugmentationRanges, random_affine
from ernet.data.volume import Volume, normalize_minmax

if TYPE_CHECKING:
    from numpy.typing import NDArray

    from ernet.core.geometry import AffineTransform

MIN_EXTENT = 32
NOISE_SIGMA = 0.02
SMOOTHING_SIGMA = 0.7

BRAIN_RADII = np.array([0.42, 0.50, 0.38])
# (centre, radii, label) of the interior structures, in normalized units.
STRUCTURES = (
    (np.array([-0.17, 0.02, 0.0]), np.array([0.13, 0.20, 0.14]), 2),
    (np.array([0.17, -0.04, 0.02]), np.array([0.12, 0.16, 0.13]), 3),
)
LABEL_INTENSITY = {1: 0.55, 2: 0.85, 3: 0.3}


@dataclass(frozen=True, eq=False)
class PhantomSample:
    """One synthetic (source, target) pair with its ground truth.

    ``truth_mask`` and ``truth_labels`` are in source space;
    ``target_labels`` are the template labels.
    """

    seed: int
    source: Volume
    target: Volume
    truth_mask: Volume
    truth_labels: Volume
    target_labels: Volume
    truth_transform: AffineTransform
    perturbation: AffineTransform


def _inside(
    points: NDArray[np.float64], centre: NDArray[np.float64], radii: NDArray[np.float64]
) -> NDArray[np.bool_]:
    scaled = (points - centre[:, None]) / radii[:, None]
    return np.asarray((scaled**2).sum(axis=0) <= 1.0)


def template_labels_at(points: NDArray[np.float64]) -> NDArray[np.int64]:
    """Template label at normalized points of shape ``(3, N)``."""
    labels = np.where(_inside(points, np.zeros(3), BRAIN_RADII), 1, 0).astype(np.int64)
    for centre, radii, label in STRUCTURES:
        labels[_inside(points, centre, radii) & (labels > 0)] = label
    return labels


def template_labels(frame: CoordinateFrame) -> NDArray[np.int64]:
    """Template label grid (0 background, 1 parenchyma, 2 and 3 interior structures)."""
    return template_labels_at(frame.normalized_grid()[:3]).reshape(frame.extents)


def _intensity(labels: NDArray[np.int64]) -> NDArray[np.float64]:
    out = np.zeros(labels.shape)
    for label, value in LABEL_INTENSITY.items():
        out[labels == label] = value
    return out


def _skull(frame: CoordinateFrame, inner: float, outer: float) -> NDArray[np.bool_]:
    points = frame.normalized_grid()[:3]
    radius = np.sqrt(((points / BRAIN_RADII[:, None]) ** 2).sum(axis=0))
    return np.asarray((radius >= inner) & (radius <= outer)).reshape(frame.extents)


def _keep_largest_component(labels: NDArray[np.int64]) -> NDArray[np.int64]:
    components, count = ndimage.label(labels > 0, structure=ndimage.generate_binary_structure(3, 1))
    if count <= 1:
        return labels
    sizes = np.bincount(components.reshape(-1))
    sizes[0] = 0
    return np.where(components == int(np.argmax(sizes)), labels, 0)


def _source_labels(
    frame: CoordinateFrame,
    perturbation: AffineTransform,
    truth: AffineTransform,
    atlas: NDArray[np.int64],
) -> NDArray[np.int64]:
    """Source-space labels that unwarp onto the atlas under nearest-neighbour sampling.

    Voxels start from the analytic template label at their perturbed position;
    every voxel picked by the nearest-neighbour unwarp then takes the atlas
    label of the target voxel that picks it.
    """
    mapped = perturbation.matrix()[:3] @ frame.normalized_grid()
    labels = template_labels_at(mapped)

    extents = np.array(frame.extents)
    idx = np.floor(sample_coordinates(truth.as_array(), frame) + 0.5).astype(np.int64)
    valid = np.all((idx >= 0) & (idx < extents[:, None]), axis=0)
    flat = np.ravel_multi_index(tuple(idx[:, valid]), frame.extents)
    labels[flat] = atlas.reshape(-1)[valid]
    return _keep_largest_component(labels.reshape(frame.extents))


def make_phantom(
    seed: int,
    extents: tuple[int, int, int] = (MIN_EXTENT, MIN_EXTENT, MIN_EXTENT),
    ranges: AugmentationRanges | None = None,
) -> PhantomSample:
    """Generate the phantom for *seed*; identical seeds give identical samples.

    Raises:
        ValueError: If any extent is below 32.
    """
    if len(extents) != 3 or min(extents) < MIN_EXTENT:
        msg = f"Phantom extents must be at least {MIN_EXTENT} per axis, got {tuple(extents)}"
        raise ValueError(msg)
    ranges = ranges or PRESETS["lpba40"]
    rng = np.random.default_rng(seed)
    frame = CoordinateFrame(tuple(int(n) for n in extents))  # type: ignore[arg-type]

    atlas = template_labels(frame)
    brain = _intensity(atlas)
    inner = 1.25 + rng.uniform(-0.03, 0.03)
    outer = inner + 0.2 + rng.uniform(0.0, 0.08)
    head = brain + _skull(frame, inner, outer) * rng.uniform(0.65, 1.0)
    head = ndimage.gaussian_filter(head, SMOOTHING_SIGMA)

    perturbation = random_affine(ranges, rng, frame)
    truth = invert(perturbation)
    source = warp_values(head, perturbation, frame)
    source = source + rng.normal(0.0, NOISE_SIGMA, size=source.shape)
    labels = _source_labels(frame, perturbation, truth, atlas)

    target = ndimage.gaussian_filter(brain, SMOOTHING_SIGMA)
    return PhantomSample(
        seed=seed,
        source=normalize_minmax(Volume(source)),
        target=normalize_minmax(Volume(target)),
        truth_mask=Volume((labels > 0).astype(np.float64), dtype="uint8"),
        truth_labels=Volume(labels.astype(np.float64), dtype="int16"),
        target_labels=Volume(atlas.astype(np.float64), dtype="int16"),
        truth_transform=truth,
        perturbation=perturbation,
    )
