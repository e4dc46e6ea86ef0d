"""Volume file formats, discovered as plugins."""

from __future__ import annotations

import functools
import importlib.metadata
import logging
from pathlib import PurePath
from typing import TYPE_CHECKING, Protocol, runtime_checkable

from ernet.data.volume import VolumeFormatError

if TYPE_CHECKING:
    from pathlib import Path

    from ernet.data.volume import Volume

logger = logging.getLogger(__name__)


@runtime_checkable
class VolumeFormat(Protocol):
    """Protocol for volume file readers and writers."""

    @property
    def name(self) -> str:
        """Short format name (e.g. 'rvol', 'nifti')."""
        ...

    @property
    def extensions(self) -> tuple[str, ...]:
        """Suffixes this format handles, with the leading dot, matched case-insensitively."""
        ...

    def read(self, path: Path) -> Volume:
        """Read a volume.

        Raises:
            VolumeFormatError: If the file is not a valid volume of this format.
        """
        ...

    def write(self, volume: Volume, path: Path) -> None:
        """Write a volume."""
        ...


class FormatRegistry:
    """Stores volume formats and resolves them by file suffix.

    Formats are registered via:
    1. Programmatic API: ``registry.register(fmt)``
    2. Entry points: ``[project.entry-points."ernet.formats"]``
    """

    ENTRY_POINT_GROUP = "ernet.formats"

    def __init__(self) -> None:
        self._formats: dict[str, VolumeFormat] = {}
        self._extension_map: dict[str, VolumeFormat] = {}

    def register(self, fmt: VolumeFormat) -> None:
        """Register a format instance.

        Raises:
            TypeError: If *fmt* does not satisfy the VolumeFormat protocol.
        """
        if not isinstance(fmt, VolumeFormat):
            msg = f"Format {fmt!r} does not satisfy the VolumeFormat protocol"
            raise TypeError(msg)

        self._formats[fmt.name] = fmt
        for ext in fmt.extensions:
            normalized = ext.lower()
            existing = self._extension_map.get(normalized)
            if existing is not None and existing.name != fmt.name:
                logger.warning(
                    "Format '%s' overrides '%s' for extension '%s'",
                    fmt.name,
                    existing.name,
                    normalized,
                )
            self._extension_map[normalized] = fmt

    def discover(self) -> None:
        """Load formats from entry points."""
        for ep in importlib.metadata.entry_points(group=self.ENTRY_POINT_GROUP):
            try:
                self.register(ep.load()())
            except Exception:
                logger.warning("Failed to load format entry point '%s'", ep.name, exc_info=True)

    def get_for_path(self, path: str | PurePath) -> VolumeFormat | None:
        suffix = PurePath(path).suffix
        if not suffix:
            return None
        return self._extension_map.get(suffix.lower())

    def require_for_path(self, path: str | PurePath) -> VolumeFormat:
        """Like :meth:`get_for_path` but raising for unknown suffixes.

        Raises:
            VolumeFormatError: If no registered format handles the suffix.
        """
        fmt = self.get_for_path(path)
        if fmt is None:
            known = ", ".join(sorted(self._extension_map))
            msg = f"No volume format for '{path}'. Known extensions: {known}"
            raise VolumeFormatError(msg)
        return fmt

    def names(self) -> tuple[str, ...]:
        return tuple(sorted(self._formats))

    def extension_for(self, name: str) -> str:
        """Primary extension of the format called *name*.

        Raises:
            KeyError: If no such format is registered.
        """
        return self._formats[name].extensions[0]


@functools.cache
def default_registry() -> FormatRegistry:
    """Built-in formats plus any installed through entry points."""
    from ernet.plugins.nifti_plugin import NiftiFormat
    from ernet.plugins.rvol_plugin import RvolFormat

    registry = FormatRegistry()
    registry.register(RvolFormat())
    registry.register(NiftiFormat())
    registry.discover()
    return registry
