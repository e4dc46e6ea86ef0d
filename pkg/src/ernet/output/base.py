"""Renderer protocol for evaluation, verification and experiment results."""

from __future__ import annotations

from typing import TYPE_CHECKING, Protocol, runtime_checkable

if TYPE_CHECKING:
    from collections.abc import Sequence

    from ernet.core.models import AblationCell, EvaluationReport, SweepPoint, TrainingLog
    from ernet.refcheck.suites import SuiteResult


@runtime_checkable
class Renderer(Protocol):
    """Protocol for rendering command results.

    Implementations write to the appropriate destination (console, stream).
    """

    def render_report(self, report: EvaluationReport) -> None:
        """Render per-pair metrics and their summary."""
        ...

    def render_suites(self, results: Sequence[SuiteResult]) -> None:
        """Render oracle suite outcomes."""
        ...

    def render_ablation(self, cells: Sequence[AblationCell]) -> None:
        """Render the stage-count grid."""
        ...

    def render_sweep(self, points: Sequence[SweepPoint]) -> None:
        """Render one row per swept value."""
        ...

    def render_training(self, log: TrainingLog) -> None:
        """Render the outcome of a training run."""
        ...
