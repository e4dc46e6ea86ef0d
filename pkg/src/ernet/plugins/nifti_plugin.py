"""Single-file NIfTI-1 volumes (uncompressed ``.nii``) through nibabel.

Only the subset needed for brain volumes is accepted: 3D grids (trailing
singleton dimensions allowed) stored as uint8, int16 or float32.  The raw
header is checked first so that each kind of damage raises its own error.
"""

from __future__ import annotations

import struct
from typing import TYPE_CHECKING

import nibabel as nib
import numpy as np
from nibabel.filebasedimages import ImageFileError

from ernet.data.volume import (
    BadMagicError,
    HeaderError,
    TruncatedVolumeError,
    UnsupportedDatatypeError,
    Volume,
)

if TYPE_CHECKING:
    from pathlib import Path

HEADER_SIZE = 348
MAGIC = b"n+1\x00"
DATATYPES: dict[int, tuple[str, int]] = {2: ("uint8", 1), 4: ("int16", 2), 16: ("float32", 4)}
_STORAGE = {"uint8": np.uint8, "int16": np.int16}


def _check_header(blob: bytes, path: Path) -> tuple[tuple[int, int, int], str]:
    if len(blob) < HEADER_SIZE:
        msg = f"NIfTI header truncated ({len(blob)} of {HEADER_SIZE} bytes): {path}"
        raise HeaderError(msg)
    if struct.unpack_from("<i", blob, 0)[0] == HEADER_SIZE:
        order = "<"
    elif struct.unpack_from(">i", blob, 0)[0] == HEADER_SIZE:
        order = ">"
    else:
        msg = f"NIfTI sizeof_hdr is not {HEADER_SIZE}: {path}"
        raise HeaderError(msg)
    if blob[344:348] != MAGIC:
        msg = f"Not a single-file NIfTI-1 image (magic {blob[344:348]!r}): {path}"
        raise BadMagicError(msg)

    dim = struct.unpack_from(f"{order}8h", blob, 40)
    ndim = dim[0]
    if not 3 <= ndim <= 7 or any(n != 1 for n in dim[4 : ndim + 1]) or min(dim[1:4]) < 1:
        msg = f"NIfTI image is not a 3D volume (dim={list(dim[: ndim + 1])}): {path}"
        raise HeaderError(msg)
    (code,) = struct.unpack_from(f"{order}h", blob, 70)
    if code not in DATATYPES:
        msg = f"Unsupported NIfTI datatype code {code}: {path}"
        raise UnsupportedDatatypeError(msg)
    dtype_name, itemsize = DATATYPES[code]
    (vox_offset,) = struct.unpack_from(f"{order}f", blob, 108)
    extents = (int(dim[1]), int(dim[2]), int(dim[3]))
    needed = int(vox_offset) + extents[0] * extents[1] * extents[2] * itemsize
    if len(blob) < needed:
        msg = f"NIfTI payload truncated ({len(blob)} of {needed} bytes): {path}"
        raise TruncatedVolumeError(msg)
    return extents, dtype_name


class NiftiFormat:
    """Reads and writes uncompressed single-file NIfTI-1 images."""

    @property
    def name(self) -> str:
        return "nifti"

    @property
    def extensions(self) -> tuple[str, ...]:
        return (".nii",)

    def read(self, path: Path) -> Volume:
        blob = path.read_bytes()
        extents, dtype_name = _check_header(blob, path)
        try:
            image = nib.Nifti1Image.from_bytes(blob)
            values = image.get_fdata(dtype=np.float64).reshape(extents)
            zooms = image.header.get_zooms()[:3]
        except (ImageFileError, ValueError) as exc:
            msg = f"NIfTI file could not be decoded: {path}: {exc}"
            raise HeaderError(msg) from exc
        spacing = tuple(float(z) if z > 0 else 1.0 for z in zooms)
        return Volume(
            values=values,
            spacing=(spacing[0], spacing[1], spacing[2]),
            dtype=dtype_name,
        )

    def write(self, volume: Volume, path: Path) -> None:
        """Write float volumes as float32 and label volumes in their integer type."""
        if volume.dtype in _STORAGE:
            data = np.rint(volume.values).astype(_STORAGE[volume.dtype])
        else:
            data = volume.values.astype(np.float32)
        affine = np.diag([*volume.spacing, 1.0])
        image = nib.Nifti1Image(data, affine)
        image.header.set_xyzt_units("mm")
        path.write_bytes(image.to_bytes())
