"""Native RVOL volume format.

Layout::

    b"RVOL" | uint32 LE header length | UTF-8 JSON header | little-endian payload

The header holds ``extents``, ``dtype``, ``spacing`` and ``intensity_range``.
The payload is stored x-fastest (Fortran order), like NIfTI.
"""

from __future__ import annotations

import json
import struct
from typing import TYPE_CHECKING

import numpy as np

from ernet.data.volume import (
    BadMagicError,
    HeaderError,
    TruncatedVolumeError,
    UnsupportedDatatypeError,
    Volume,
)

if TYPE_CHECKING:
    from pathlib import Path

MAGIC = b"RVOL"
_LENGTH = struct.Struct("<I")
_DTYPES = {"uint8": "<u1", "int16": "<i2", "float32": "<f4", "float64": "<f8"}


class RvolFormat:
    """Reads and writes ``.rvol`` files; float64 volumes round-trip bit-exact."""

    @property
    def name(self) -> str:
        return "rvol"

    @property
    def extensions(self) -> tuple[str, ...]:
        return (".rvol",)

    def read(self, path: Path) -> Volume:
        blob = path.read_bytes()
        if len(blob) < len(MAGIC) + _LENGTH.size:
            msg = f"File too short for an RVOL header: {path}"
            raise HeaderError(msg)
        if blob[:4] != MAGIC:
            msg = f"Not an RVOL file (bad magic {blob[:4]!r}): {path}"
            raise BadMagicError(msg)
        (length,) = _LENGTH.unpack_from(blob, 4)
        start = 4 + _LENGTH.size
        payload_start = start + length
        if len(blob) < payload_start:
            msg = f"RVOL header truncated: {path}"
            raise HeaderError(msg)
        try:
            header = json.loads(blob[start:payload_start].decode("utf-8"))
            extents = tuple(int(n) for n in header["extents"])
            dtype_name = str(header["dtype"])
            spacing = tuple(float(s) for s in header.get("spacing", (1.0, 1.0, 1.0)))
            raw_range = header.get("intensity_range")
        except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            msg = f"RVOL header is invalid: {path}: {exc}"
            raise HeaderError(msg) from exc
        if len(extents) != 3 or min(extents) < 1 or len(spacing) != 3:
            msg = f"RVOL header needs three positive extents and spacings: {path}"
            raise HeaderError(msg)
        if dtype_name not in _DTYPES:
            msg = f"Unsupported RVOL datatype '{dtype_name}': {path}"
            raise UnsupportedDatatypeError(msg)

        dtype = np.dtype(_DTYPES[dtype_name])
        count = extents[0] * extents[1] * extents[2]
        if len(blob) < payload_start + count * dtype.itemsize:
            msg = f"RVOL payload truncated: expected {count} voxels in {path}"
            raise TruncatedVolumeError(msg)
        values = np.frombuffer(blob, dtype=dtype, count=count, offset=payload_start)
        return Volume(
            values=values.reshape(extents, order="F").astype(np.float64),
            spacing=(spacing[0], spacing[1], spacing[2]),
            intensity_range=(
                None if raw_range is None else (float(raw_range[0]), float(raw_range[1]))
            ),
            dtype=dtype_name,
        )

    def write(self, volume: Volume, path: Path) -> None:
        header = {
            "extents": list(volume.extents),
            "dtype": volume.dtype,
            "spacing": list(volume.spacing),
            "intensity_range": (
                None if volume.intensity_range is None else list(volume.intensity_range)
            ),
        }
        encoded = json.dumps(header).encode("utf-8")
        values = volume.values
        if volume.dtype in ("uint8", "int16"):
            values = np.rint(values)
        payload = np.asarray(values, dtype=_DTYPES[volume.dtype]).tobytes(order="F")
        path.write_bytes(MAGIC + _LENGTH.pack(len(encoded)) + encoded + payload)
