"""Evaluation report persistence and baseline comparison.

Reports are versioned JSON files with the structure::

    {"report_version": 1, "stages": [M, N], "records": [...], "summary": {...}}

A CSV summary (one row per metric) can be written alongside.
"""

from __future__ import annotations

import csv
import dataclasses
import json
from dataclasses import dataclass
from typing import TYPE_CHECKING, Any

from ernet.core.models import (
    EvaluationReport,
    LabelDice,
    MetricReport,
    MetricStat,
    MetricSummary,
)

if TYPE_CHECKING:
    from pathlib import Path

    from rich.console import Console

REPORT_VERSION = 1
SUMMARY_METRICS = ("dice_ext", "dice_reg", "translation_error", "component_count")


class ReportError(Exception):
    """Raised when a report file cannot be read or is invalid."""


@dataclass(frozen=True)
class MetricDelta:
    """Change of one summary mean between a baseline and a current report."""

    metric: str
    baseline: float | None
    current: float | None

    @property
    def delta(self) -> float | None:
        if self.baseline is None or self.current is None:
            return None
        return self.current - self.baseline


@dataclass(frozen=True)
class BaselineComparison:
    """Result of comparing a baseline report against a current one."""

    baseline: EvaluationReport
    current: EvaluationReport
    deltas: tuple[MetricDelta, ...]
    pairs_only_in_baseline: tuple[str, ...]
    pairs_only_in_current: tuple[str, ...]


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def report_to_dict(report: EvaluationReport) -> dict[str, Any]:
    return {
        "report_version": REPORT_VERSION,
        "stages": list(report.stages),
        "records": [dataclasses.asdict(r) for r in report.records],
        "summary": dataclasses.asdict(report.summary),
    }


def save_report(report: EvaluationReport, path: Path) -> None:
    """Serialize *report* to *path* as versioned JSON."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as f:
        json.dump(report_to_dict(report), f, indent=2)
        f.write("\n")


def write_summary_csv(report: EvaluationReport, path: Path) -> None:
    """One row per summary metric: ``metric, mean, std, count``."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(("metric", "mean", "std", "count"))
        for metric in SUMMARY_METRICS:
            stat: MetricStat | None = getattr(report.summary, metric)
            if stat is not None:
                writer.writerow((metric, repr(stat.mean), repr(stat.std), stat.count))


# ---------------------------------------------------------------------------
# Deserialization
# ---------------------------------------------------------------------------


def load_report(path: Path) -> EvaluationReport:
    """Load a report file written by :func:`save_report`.

    Raises:
        ReportError: If the file is missing, malformed, or has an unsupported version.
    """
    try:
        with path.open(encoding="utf-8") as f:
            data: dict[str, Any] = json.load(f)
    except FileNotFoundError:
        msg = f"Report file not found: {path}"
        raise ReportError(msg) from None
    except json.JSONDecodeError as exc:
        msg = f"Report file is not valid JSON: {path}: {exc}"
        raise ReportError(msg) from exc

    version = data.get("report_version") if isinstance(data, dict) else None
    if version != REPORT_VERSION:
        msg = f"Unsupported report version {version!r}. Expected {REPORT_VERSION}."
        raise ReportError(msg)

    try:
        m, n = (int(s) for s in data["stages"])
        return EvaluationReport(
            stages=(m, n),
            records=tuple(_record_from_dict(r) for r in data["records"]),
            summary=_summary_from_dict(data["summary"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        msg = f"Report has invalid structure: {exc}"
        raise ReportError(msg) from exc


def _optional_float(value: Any) -> float | None:
    return None if value is None else float(value)


def _record_from_dict(d: dict[str, Any]) -> MetricReport:
    return MetricReport(
        pair_id=str(d["pair_id"]),
        dice_ext=float(d["dice_ext"]),
        dice_reg=float(d["dice_reg"]),
        per_label=tuple(
            LabelDice(label=int(x["label"]), dice=float(x["dice"])) for x in d.get("per_label", ())
        ),
        component_count=int(d["component_count"]),
        translation_error=_optional_float(d.get("translation_error")),
        similarity=_optional_float(d.get("similarity")),
        regularizer_sum=_optional_float(d.get("regularizer_sum")),
        total_loss=_optional_float(d.get("total_loss")),
    )


def _stat_from_dict(d: dict[str, Any] | None) -> MetricStat | None:
    if d is None:
        return None
    return MetricStat(mean=float(d["mean"]), std=float(d["std"]), count=int(d["count"]))


def _summary_from_dict(d: dict[str, Any]) -> MetricSummary:
    return MetricSummary(
        pair_count=int(d["pair_count"]),
        dice_ext=_stat_from_dict(d.get("dice_ext")),
        dice_reg=_stat_from_dict(d.get("dice_reg")),
        translation_error=_stat_from_dict(d.get("translation_error")),
        component_count=_stat_from_dict(d.get("component_count")),
        skipped=tuple(str(s) for s in d.get("skipped", ())),
        degenerate=bool(d.get("degenerate", False)),
    )


# ---------------------------------------------------------------------------
# Baseline comparison
# ---------------------------------------------------------------------------


def _mean(stat: MetricStat | None) -> float | None:
    return None if stat is None else stat.mean


def compare_to_baseline(
    baseline: EvaluationReport, current: EvaluationReport
) -> BaselineComparison:
    """Summary-mean deltas and pair-set differences between two reports."""
    deltas = tuple(
        MetricDelta(
            metric=metric,
            baseline=_mean(getattr(baseline.summary, metric)),
            current=_mean(getattr(current.summary, metric)),
        )
        for metric in SUMMARY_METRICS
    )
    baseline_ids = {r.pair_id for r in baseline.records}
    current_ids = {r.pair_id for r in current.records}
    return BaselineComparison(
        baseline=baseline,
        current=current,
        deltas=deltas,
        pairs_only_in_baseline=tuple(sorted(baseline_ids - current_ids)),
        pairs_only_in_current=tuple(sorted(current_ids - baseline_ids)),
    )


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------


def render_baseline(comparison: BaselineComparison, console: Console | None = None) -> None:
    """Render a baseline comparison to the terminal using Rich."""
    from rich.console import Console as RichConsole
    from rich.table import Table

    con = console or RichConsole()
    table = Table(title="Metric Delta", title_style="bold")
    table.add_column("Metric", style="bold")
    table.add_column("Baseline", justify="right")
    table.add_column("Current", justify="right")
    table.add_column("Delta", justify="right")
    for d in comparison.deltas:
        delta = d.delta
        if delta is None:
            delta_str = "[dim]n/a[/dim]"
        else:
            # Lower is better only for translation error.
            better = delta < 0 if d.metric == "translation_error" else delta > 0
            if delta == 0:
                delta_str = "[dim]0[/dim]"
            elif better:
                delta_str = f"[green]{delta:+.4f}[/green]"
            else:
                delta_str = f"[red]{delta:+.4f}[/red]"
        table.add_row(
            d.metric,
            "-" if d.baseline is None else f"{d.baseline:.4f}",
            "-" if d.current is None else f"{d.current:.4f}",
            delta_str,
        )
    con.print(table)

    if comparison.pairs_only_in_baseline:
        count = len(comparison.pairs_only_in_baseline)
        con.print(f"[bold red]{count} pair(s) only in baseline:[/bold red]")
        for p in comparison.pairs_only_in_baseline:
            con.print(f"  [red]- {p}[/red]")
    if comparison.pairs_only_in_current:
        count = len(comparison.pairs_only_in_current)
        con.print(f"[bold green]{count} new pair(s):[/bold green]")
        for p in comparison.pairs_only_in_current:
            con.print(f"  [green]+ {p}[/green]")
