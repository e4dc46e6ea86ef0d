"""Public API for ernet.output."""

from __future__ import annotations

from ernet.output.base import Renderer
from ernet.output.json_output import JsonRenderer
from ernet.output.rich_output import RichRenderer

__all__ = [
    "JsonRenderer",
    "Renderer",
    "RichRenderer",
]
