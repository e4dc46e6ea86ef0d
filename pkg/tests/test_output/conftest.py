"""Shared result fixtures for renderer tests."""

from __future__ import annotations

from pathlib import Path

import pytest

from ernet.core.models import (
    AblationCell,
    EvaluationReport,
    LabelDice,
    MetricReport,
    SweepPoint,
    TrainingLog,
    TrainRecord,
)
from ernet.core.pipeline import summarize
from ernet.refcheck.suites import SuiteResult


def _record(pair_id: str, ext: float, reg: float) -> MetricReport:
    return MetricReport(
        pair_id=pair_id,
        dice_ext=ext,
        dice_reg=reg,
        per_label=(LabelDice(1, reg),),
        component_count=1,
        translation_error=0.75,
        similarity=-0.5,
        regularizer_sum=4.0,
        total_loss=3.5,
    )


@pytest.fixture
def report() -> EvaluationReport:
    """Two pairs: one good, one poor."""
    records = (_record("phantom_00000", 0.95, 0.7), _record("phantom_00001", 0.4, 0.3))
    return EvaluationReport(stages=(1, 2), records=records, summary=summarize(records))


@pytest.fixture
def suite_results() -> list[SuiteResult]:
    return [
        SuiteResult("equivalence", "warp", 5, 1e-14, 1e-10),
        SuiteResult("gradient", "conv3d", 3, 2e-3, 1e-5),
    ]


@pytest.fixture
def cells(report: EvaluationReport) -> list[AblationCell]:
    return [
        AblationCell(0, 0, summarize((), degenerate=True)),
        AblationCell(1, 0, report.summary),
        AblationCell(1, 1, report.summary),
    ]


@pytest.fixture
def sweep_points(report: EvaluationReport) -> list[SweepPoint]:
    return [
        SweepPoint("gamma", 1.0, report.summary, 12.5),
        SweepPoint("gamma", 10.0, report.summary, None),
    ]


@pytest.fixture
def training_log() -> TrainingLog:
    records = (
        TrainRecord(1, -0.2, 10.0, 9.8),
        TrainRecord(2, -0.3, 8.0, 7.7, val_dice_ext=0.81, val_dice_reg=0.62),
    )
    return TrainingLog(
        records=records, best_iteration=2, best_score=0.715, checkpoint_dir=Path("ckpt")
    )
