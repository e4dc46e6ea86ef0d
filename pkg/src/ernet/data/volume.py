"""In-memory volumes, intensity normalization and format-dispatched file I/O."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import TYPE_CHECKING

import numpy as np

from ernet.tensorcore import DiffTensor

if TYPE_CHECKING:
    from pathlib import Path

    from numpy.typing import ArrayLike, NDArray

    from ernet.data.formats import FormatRegistry

SUPPORTED_DTYPES = ("uint8", "int16", "float32", "float64")


class VolumeFormatError(Exception):
    """Base class for unreadable or unwritable volume files."""


class HeaderError(VolumeFormatError):
    """The header is missing, short or inconsistent."""


class BadMagicError(VolumeFormatError):
    """The file does not carry the expected magic bytes."""


class UnsupportedDatatypeError(VolumeFormatError):
    """The voxel datatype is outside the supported subset."""


class TruncatedVolumeError(VolumeFormatError):
    """The payload is shorter than the header declares."""


@dataclass(frozen=True, eq=False)
class Volume:
    """A ``W x H x D`` scalar grid with voxel spacing and its original intensity range.

    Attributes:
        values: Voxel values as float64, indexed ``[x, y, z]``.
        spacing: Voxel size in millimetres (informational).
        intensity_range: ``(min, max)`` recorded before normalization, if any.
        dtype: Storage type used when the volume is written.
    """

    values: NDArray[np.float64]
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    intensity_range: tuple[float, float] | None = None
    dtype: str = "float64"

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 3:
            msg = f"Volume needs a 3D grid, got shape {values.shape}"
            raise ValueError(msg)
        if self.dtype not in SUPPORTED_DTYPES:
            choices = ", ".join(SUPPORTED_DTYPES)
            msg = f"Unsupported volume dtype '{self.dtype}'. Choose from: {choices}"
            raise ValueError(msg)
        object.__setattr__(self, "values", values)

    @property
    def extents(self) -> tuple[int, int, int]:
        w, h, d = self.values.shape
        return int(w), int(h), int(d)

    def as_tensor(self) -> DiffTensor:
        return DiffTensor(self.values)

    def with_values(self, values: ArrayLike, *, dtype: str | None = None) -> Volume:
        return replace(self, values=np.asarray(values, dtype=np.float64), dtype=dtype or self.dtype)


def normalize_minmax(volume: Volume) -> Volume:
    """Rescale to ``[0, 1]``; a constant volume becomes all zeros.

    The pre-normalization range is kept in ``intensity_range`` unless one was
    already recorded.
    """
    lo = float(volume.values.min())
    hi = float(volume.values.max())
    if hi > lo:
        scaled = (volume.values - lo) / (hi - lo)
    else:
        scaled = np.zeros_like(volume.values)
    recorded = volume.intensity_range if volume.intensity_range is not None else (lo, hi)
    return replace(volume, values=scaled, intensity_range=recorded)


def read_volume(path: Path, *, registry: FormatRegistry | None = None) -> Volume:
    """Read a volume, choosing the format by file suffix.

    Raises:
        VolumeFormatError: If no format handles the suffix or the file is invalid.
        OSError: If the file cannot be read.
    """
    from ernet.data.formats import default_registry

    handler = (registry or default_registry()).require_for_path(path)
    return handler.read(path)


def write_volume(volume: Volume, path: Path, *, registry: FormatRegistry | None = None) -> None:
    """Write a volume in the format named by the file suffix."""
    from ernet.data.formats import default_registry

    handler = (registry or default_registry()).require_for_path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    handler.write(volume, path)
