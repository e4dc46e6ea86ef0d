"""JSON export renderer."""

from __future__ import annotations

import dataclasses
import json
import sys
from pathlib import PurePath
from typing import TYPE_CHECKING, Any

from ernet.core.report import report_to_dict

if TYPE_CHECKING:
    from collections.abc import Sequence
    from typing import TextIO

    from ernet.core.models import AblationCell, EvaluationReport, SweepPoint, TrainingLog
    from ernet.refcheck.suites import SuiteResult


class _ResultEncoder(json.JSONEncoder):
    """Encode Path objects as strings; StrEnum values serialize natively."""

    def default(self, o: object) -> object:
        if isinstance(o, PurePath):
            return str(o)
        return super().default(o)


class JsonRenderer:
    """Renders results as JSON to a text stream (stdout by default)."""

    def __init__(self, output: TextIO | None = None, *, indent: int = 2) -> None:
        self._output = output or sys.stdout
        self._indent = indent

    def _dump(self, data: Any) -> None:
        json.dump(data, self._output, cls=_ResultEncoder, indent=self._indent)
        self._output.write("\n")

    def render_report(self, report: EvaluationReport) -> None:
        self._dump(report_to_dict(report))

    def render_suites(self, results: Sequence[SuiteResult]) -> None:
        self._dump(
            {
                "passed": all(r.passed for r in results),
                "checks": [{**dataclasses.asdict(r), "passed": r.passed} for r in results],
            }
        )

    def render_ablation(self, cells: Sequence[AblationCell]) -> None:
        self._dump([dataclasses.asdict(c) for c in cells])

    def render_sweep(self, points: Sequence[SweepPoint]) -> None:
        self._dump([dataclasses.asdict(p) for p in points])

    def render_training(self, log: TrainingLog) -> None:
        self._dump(
            {
                "iterations": len(log.records),
                "final": dataclasses.asdict(log.records[-1]) if log.records else None,
                "best_iteration": log.best_iteration,
                "best_score": log.best_score,
                "checkpoint_dir": log.checkpoint_dir,
            }
        )
