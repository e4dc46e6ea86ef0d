"""ERN1 parameter checkpoint format.

Layout::

    b"ERN1" | uint64 LE manifest length | UTF-8 JSON manifest | raw LE payload

The manifest is ``{"tensors": [{"name", "shape", "dtype", "offset"}, ...],
"meta": {...}}``; offsets are relative to the start of the payload.  Values
are stored as little-endian float64 (or float32 when exporting), so a float64
round trip is bit-exact.
"""

from __future__ import annotations

import json
import struct
from typing import TYPE_CHECKING, Any

import numpy as np

if TYPE_CHECKING:
    from collections.abc import Mapping
    from pathlib import Path

    from numpy.typing import NDArray

MAGIC = b"ERN1"
_LENGTH = struct.Struct("<Q")
_DTYPES = {"float64": "<f8", "float32": "<f4"}


class CheckpointError(Exception):
    """Raised when a checkpoint file cannot be read or is invalid."""


def save_checkpoint(
    path: Path,
    tensors: Mapping[str, NDArray[np.float64]],
    *,
    meta: Mapping[str, Any] | None = None,
    dtype: str = "float64",
) -> None:
    """Write named arrays (and free-form JSON metadata) to *path*.

    Args:
        path: Destination file.
        tensors: Arrays keyed by name; order is preserved.
        meta: JSON-serializable metadata stored in the manifest.
        dtype: ``"float64"`` (exact) or ``"float32"`` (export only).
    """
    if dtype not in _DTYPES:
        msg = f"Unsupported checkpoint dtype '{dtype}'. Choose from: {', '.join(_DTYPES)}"
        raise CheckpointError(msg)
    entries: list[dict[str, Any]] = []
    chunks: list[bytes] = []
    offset = 0
    for name, array in tensors.items():
        raw = np.ascontiguousarray(array, dtype=_DTYPES[dtype]).tobytes()
        entries.append(
            {"name": name, "shape": list(np.shape(array)), "dtype": dtype, "offset": offset}
        )
        chunks.append(raw)
        offset += len(raw)

    manifest = json.dumps({"tensors": entries, "meta": dict(meta or {})}).encode("utf-8")
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as f:
        f.write(MAGIC)
        f.write(_LENGTH.pack(len(manifest)))
        f.write(manifest)
        for chunk in chunks:
            f.write(chunk)


def load_checkpoint(path: Path) -> tuple[dict[str, NDArray[np.float64]], dict[str, Any]]:
    """Read a checkpoint written by :func:`save_checkpoint`.

    Returns:
        ``(tensors, meta)`` with arrays converted to float64.

    Raises:
        CheckpointError: If the file is missing, has the wrong magic, or is truncated.
    """
    try:
        blob = path.read_bytes()
    except FileNotFoundError:
        msg = f"Checkpoint file not found: {path}"
        raise CheckpointError(msg) from None

    if blob[:4] != MAGIC:
        msg = f"Not an ERN1 checkpoint (bad magic {blob[:4]!r}): {path}"
        raise CheckpointError(msg)
    header_end = 4 + _LENGTH.size
    if len(blob) < header_end:
        msg = f"Checkpoint truncated before manifest length: {path}"
        raise CheckpointError(msg)
    (length,) = _LENGTH.unpack_from(blob, 4)
    payload_start = header_end + length
    if len(blob) < payload_start:
        msg = f"Checkpoint truncated inside manifest: {path}"
        raise CheckpointError(msg)
    try:
        manifest = json.loads(blob[header_end:payload_start].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        msg = f"Checkpoint manifest is not valid JSON: {path}: {exc}"
        raise CheckpointError(msg) from exc

    tensors: dict[str, NDArray[np.float64]] = {}
    try:
        for entry in manifest["tensors"]:
            dtype = np.dtype(_DTYPES[entry["dtype"]])
            shape = tuple(int(n) for n in entry["shape"])
            count = int(np.prod(shape, dtype=np.int64))
            start = payload_start + int(entry["offset"])
            end = start + count * dtype.itemsize
            if end > len(blob):
                msg = f"Checkpoint truncated inside tensor '{entry['name']}': {path}"
                raise CheckpointError(msg)
            array = np.frombuffer(blob, dtype=dtype, count=count, offset=start)
            tensors[str(entry["name"])] = array.reshape(shape).astype(np.float64)
    except (KeyError, TypeError, ValueError) as exc:
        msg = f"Checkpoint manifest has invalid structure: {exc}"
        raise CheckpointError(msg) from exc

    return tensors, dict(manifest.get("meta", {}))
