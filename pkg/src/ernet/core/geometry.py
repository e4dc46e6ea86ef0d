"""Affine transforms, coordinate frames and the spatial transformation layer.

Transforms are stored as the top three rows of a 4x4 homogeneous matrix and act
in *normalized-centered* coordinates: each axis of the voxel grid is mapped to
``[-1, 1]`` with voxel ``0 -> -1`` and voxel ``n-1 -> +1``.  Warping is backward:
each output voxel samples the source at the transformed coordinate.
"""

from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass
from enum import StrEnum
from typing import TYPE_CHECKING

import numpy as np

from ernet.tensorcore.tensor import DiffTensor, ShapeError, make_result

if TYPE_CHECKING:
    from collections.abc import Sequence
    from pathlib import Path

    from numpy.typing import ArrayLike, NDArray

_IDENTITY = (1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0)

# Sample coordinates this close to a voxel centre are treated as exactly on it.
_SNAP_TOLERANCE = 1e-9


class Convention(StrEnum):
    """Coordinate convention of a serialized transform."""

    normalized = "normalized-centered"
    voxel = "voxel"


class TransformFormatError(ValueError):
    """Raised when a transform text file cannot be parsed."""


@dataclass(frozen=True)
class AffineTransform:
    """12-parameter affine transform (row-major top three rows of ``A``)."""

    params: tuple[float, ...] = _IDENTITY

    def __post_init__(self) -> None:
        if len(self.params) != 12:
            msg = f"AffineTransform needs 12 parameters, got {len(self.params)}"
            raise ValueError(msg)

    @classmethod
    def identity(cls) -> AffineTransform:
        return cls(_IDENTITY)

    @classmethod
    def from_array(cls, values: ArrayLike) -> AffineTransform:
        flat = np.asarray(values, dtype=np.float64).reshape(-1)
        return cls(tuple(float(v) for v in flat))

    @classmethod
    def from_matrix(cls, matrix: ArrayLike) -> AffineTransform:
        """Build from a 4x4 (or 3x4) matrix; the last row is not stored."""
        m = np.asarray(matrix, dtype=np.float64)
        if m.shape not in ((4, 4), (3, 4)):
            msg = f"Expected a 4x4 or 3x4 matrix, got {m.shape}"
            raise ValueError(msg)
        return cls.from_array(m[:3])

    @classmethod
    def from_tensor(cls, tensor: DiffTensor) -> AffineTransform:
        return cls.from_array(tensor.values)

    def as_array(self) -> NDArray[np.float64]:
        return np.array(self.params, dtype=np.float64)

    def as_tensor(self, *, requires_grad: bool = False) -> DiffTensor:
        return DiffTensor(self.as_array(), requires_grad=requires_grad)

    def matrix(self) -> NDArray[np.float64]:
        """Return the 4x4 homogeneous matrix; the last row is exactly (0, 0, 0, 1)."""
        return _to_matrix(self.as_array())

    @property
    def translation(self) -> NDArray[np.float64]:
        return self.as_array()[[3, 7, 11]]


@dataclass(frozen=True)
class CoordinateFrame:
    """Voxel grid extents plus the normalized-centered convention."""

    extents: tuple[int, int, int]

    def __post_init__(self) -> None:
        if len(self.extents) != 3 or min(self.extents) < 2:
            msg = f"CoordinateFrame needs three extents >= 2, got {self.extents}"
            raise ValueError(msg)

    @classmethod
    def for_shape(cls, shape: Sequence[int]) -> CoordinateFrame:
        w, h, d = (int(n) for n in shape[-3:])
        return cls((w, h, d))

    @property
    def half_extents(self) -> NDArray[np.float64]:
        """``(n - 1) / 2`` per axis: normalized unit length in voxels."""
        return (np.array(self.extents, dtype=np.float64) - 1.0) / 2.0

    def normalization_matrix(self) -> NDArray[np.float64]:
        """``N``: voxel index -> normalized-centered coordinate."""
        s = self.half_extents
        n = np.eye(4)
        n[:3, :3] = np.diag(1.0 / s)
        n[:3, 3] = -1.0
        return n

    def denormalization_matrix(self) -> NDArray[np.float64]:
        """``N^-1``: normalized-centered coordinate -> voxel index."""
        s = self.half_extents
        n_inv = np.eye(4)
        n_inv[:3, :3] = np.diag(s)
        n_inv[:3, 3] = s
        return n_inv

    def normalized_grid(self) -> NDArray[np.float64]:
        """Homogeneous normalized coordinates of every voxel, shape ``(4, W*H*D)``."""
        return _normalized_grid(self.extents)


@functools.lru_cache(maxsize=16)
def _normalized_grid(extents: tuple[int, int, int]) -> NDArray[np.float64]:
    idx = np.indices(extents, dtype=np.float64).reshape(3, -1)
    s = (np.array(extents, dtype=np.float64) - 1.0) / 2.0
    grid = np.ones((4, idx.shape[1]))
    grid[:3] = idx / s[:, None] - 1.0
    grid.flags.writeable = False
    return grid


def _to_matrix(params: NDArray[np.float64]) -> NDArray[np.float64]:
    m = np.zeros((4, 4))
    m[:3] = params.reshape(3, 4)
    m[3, 3] = 1.0
    return m


# ---------------------------------------------------------------------------
# Pure transform algebra
# ---------------------------------------------------------------------------


def compose(inner: AffineTransform, outer: AffineTransform) -> AffineTransform:
    """Return the transform applying *inner* first, then *outer* (``outer @ inner``)."""
    return AffineTransform.from_matrix(outer.matrix() @ inner.matrix())


def map_point(t: AffineTransform, point: ArrayLike) -> NDArray[np.float64]:
    """Map a 3-vector through ``t`` in homogeneous coordinates."""
    p = np.append(np.asarray(point, dtype=np.float64).reshape(3), 1.0)
    return (t.matrix() @ p)[:3]


def to_voxel_matrix(t: AffineTransform, frame: CoordinateFrame) -> NDArray[np.float64]:
    """Express ``t`` in raw voxel coordinates: ``N^-1 @ A @ N``."""
    return frame.denormalization_matrix() @ t.matrix() @ frame.normalization_matrix()


def from_voxel_matrix(matrix: ArrayLike, frame: CoordinateFrame) -> AffineTransform:
    """Inverse of :func:`to_voxel_matrix`."""
    m = np.asarray(matrix, dtype=np.float64)
    return AffineTransform.from_matrix(
        frame.normalization_matrix() @ m @ frame.denormalization_matrix()
    )


def invert(t: AffineTransform) -> AffineTransform:
    return AffineTransform.from_matrix(np.linalg.inv(t.matrix()))


def center_displacement(t: AffineTransform, frame: CoordinateFrame) -> NDArray[np.float64]:
    """Displacement (in voxels) of the volume centre under ``t``."""
    # The centre is the origin in normalized coordinates.
    return t.translation * frame.half_extents


# ---------------------------------------------------------------------------
# Differentiable layers
# ---------------------------------------------------------------------------


def compose_params(inner: DiffTensor, outer: DiffTensor) -> DiffTensor:
    """Composition layer on 12-vectors: ``outer @ inner`` with gradients to both."""
    if inner.shape != (12,) or outer.shape != (12,):
        msg = f"compose_params expects two 12-vectors, got {inner.shape} and {outer.shape}"
        raise ShapeError(msg)
    a = _to_matrix(inner.values)
    b = _to_matrix(outer.values)
    values = (b @ a)[:3].reshape(12)

    def backward(g: NDArray[np.float64]) -> tuple[NDArray[np.float64], ...]:
        g_c = np.zeros((4, 4))
        g_c[:3] = g.reshape(3, 4)
        g_inner = (b.T @ g_c)[:3].reshape(12)
        g_outer = (g_c @ a.T)[:3].reshape(12)
        return g_inner, g_outer

    return make_result("compose", values, (inner, outer), backward)


def sample_coordinates(params: NDArray[np.float64], frame: CoordinateFrame) -> NDArray[np.float64]:
    """Source voxel coordinates sampled by each output voxel, shape ``(3, W*H*D)``."""
    grid = frame.normalized_grid()
    mapped = params.reshape(3, 4) @ grid
    coords = (mapped + 1.0) * frame.half_extents[:, None]
    nearest = np.rint(coords)
    return np.where(np.abs(coords - nearest) < _SNAP_TOLERANCE, nearest, coords)


def warp(source: DiffTensor, params: DiffTensor, frame: CoordinateFrame) -> DiffTensor:
    """Spatial transformation layer: backward warp with trilinear interpolation.

    Samples outside the source grid contribute zero.  Differentiable with
    respect to the source values and the 12 transform parameters.

    Raises:
        ShapeError: If ``source`` is not a ``W x H x D`` grid matching ``frame``.
    """
    if source.shape != frame.extents:
        msg = f"warp source shape {source.shape} does not match frame {frame.extents}"
        raise ShapeError(msg)
    if params.shape != (12,):
        msg = f"warp expects 12 transform parameters, got shape {params.shape}"
        raise ShapeError(msg)

    extents = np.array(frame.extents)
    src = source.values.reshape(-1)
    coords = sample_coordinates(params.values, frame)
    base = np.floor(coords).astype(np.int64)
    frac = coords - base
    n = coords.shape[1]

    out = np.zeros(n)
    d_coords = np.zeros((3, n))
    corners: list[tuple[NDArray[np.int64], NDArray[np.float64], NDArray[np.bool_]]] = []
    for offset in itertools.product((0, 1), repeat=3):
        idx = base + np.array(offset)[:, None]
        valid = np.all((idx >= 0) & (idx < extents[:, None]), axis=0)
        flat = np.ravel_multi_index(tuple(np.clip(idx, 0, extents[:, None] - 1)), frame.extents)
        value = np.where(valid, src[flat], 0.0)
        factors = [frac[a] if offset[a] else 1.0 - frac[a] for a in range(3)]
        weight = factors[0] * factors[1] * factors[2]
        out += weight * value
        for a in range(3):
            others = [factors[b] for b in range(3) if b != a]
            sign = 1.0 if offset[a] else -1.0
            d_coords[a] += sign * others[0] * others[1] * value
        corners.append((flat, weight, valid))

    grid = frame.normalized_grid()
    half = frame.half_extents

    def backward(g: NDArray[np.float64]) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        g_flat = g.reshape(-1)
        g_src = np.zeros(src.size)
        for flat, weight, valid in corners:
            g_src += np.bincount(
                flat[valid], weights=(g_flat * weight)[valid], minlength=src.size
            )
        g_mapped = d_coords * g_flat * half[:, None]
        g_params = (g_mapped @ grid.T).reshape(12)
        return g_src.reshape(source.shape), g_params

    return make_result("warp", out.reshape(frame.extents), (source, params), backward)


def warp_values(
    values: NDArray[np.float64], t: AffineTransform, frame: CoordinateFrame
) -> NDArray[np.float64]:
    """Non-recording trilinear warp of a plain array."""
    from ernet.tensorcore.tensor import no_grad

    with no_grad():
        return warp(DiffTensor(values), t.as_tensor(), frame).values


def warp_labels(
    labels: NDArray[np.integer], t: AffineTransform, frame: CoordinateFrame
) -> NDArray[np.int64]:
    """Nearest-neighbour backward warp of an integer label grid.

    Samples outside the grid become label 0 (background).
    """
    if tuple(labels.shape) != frame.extents:
        msg = f"label grid shape {labels.shape} does not match frame {frame.extents}"
        raise ShapeError(msg)
    extents = np.array(frame.extents)
    coords = sample_coordinates(t.as_array(), frame)
    idx = np.floor(coords + 0.5).astype(np.int64)
    valid = np.all((idx >= 0) & (idx < extents[:, None]), axis=0)
    flat = np.ravel_multi_index(tuple(np.clip(idx, 0, extents[:, None] - 1)), frame.extents)
    out = np.where(valid, np.asarray(labels, dtype=np.int64).reshape(-1)[flat], 0)
    return out.reshape(frame.extents)


# ---------------------------------------------------------------------------
# Transform text format
# ---------------------------------------------------------------------------

_HEADER_PREFIX = "# ernet affine; convention: "


def format_transform(
    t: AffineTransform,
    frame: CoordinateFrame,
    convention: Convention = Convention.normalized,
) -> str:
    """Render a transform as a header line plus one line of 12 values."""
    if convention == Convention.voxel:
        values = to_voxel_matrix(t, frame)[:3].reshape(12)
    else:
        values = t.as_array()
    body = " ".join(format(float(v), ".17g") for v in values)
    return f"{_HEADER_PREFIX}{convention.value}\n{body}\n"


def write_transform(
    path: Path,
    t: AffineTransform,
    frame: CoordinateFrame,
    convention: Convention = Convention.normalized,
) -> None:
    path.write_text(format_transform(t, frame, convention), encoding="utf-8")


def parse_transform(text: str, frame: CoordinateFrame) -> AffineTransform:
    """Parse :func:`format_transform` output back to a normalized-centered transform.

    Raises:
        TransformFormatError: On a missing/unknown header or a wrong value count.
    """
    lines = [line.strip() for line in text.splitlines() if line.strip()]
    if not lines or not lines[0].startswith(_HEADER_PREFIX):
        msg = "Transform file is missing the convention header line"
        raise TransformFormatError(msg)
    name = lines[0][len(_HEADER_PREFIX) :]
    try:
        convention = Convention(name)
    except ValueError:
        valid = ", ".join(c.value for c in Convention)
        msg = f"Unknown transform convention '{name}'. Choose from: {valid}"
        raise TransformFormatError(msg) from None
    try:
        values = [float(v) for v in " ".join(lines[1:]).split()]
    except ValueError as exc:
        msg = f"Transform values are not numbers: {exc}"
        raise TransformFormatError(msg) from exc
    if len(values) != 12:
        msg = f"Transform needs 12 values, found {len(values)}"
        raise TransformFormatError(msg)
    if convention == Convention.voxel:
        return from_voxel_matrix(_to_matrix(np.array(values)), frame)
    return AffineTransform(tuple(values))


def read_transform(path: Path, frame: CoordinateFrame) -> AffineTransform:
    return parse_transform(path.read_text(encoding="utf-8"), frame)
