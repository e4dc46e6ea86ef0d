"""Rich console renderer (default output mode)."""

from __future__ import annotations

from typing import TYPE_CHECKING

from rich.console import Console
from rich.table import Table
from rich.text import Text

if TYPE_CHECKING:
    from collections.abc import Sequence

    from ernet.core.models import (
        AblationCell,
        EvaluationReport,
        MetricStat,
        MetricSummary,
        SweepPoint,
        TrainingLog,
        TrainRecord,
    )
    from ernet.refcheck.suites import SuiteResult


def format_stat(stat: MetricStat | None, digits: int = 3) -> str:
    """``mean ± std``, or a dash when the metric was never computed."""
    if stat is None:
        return "-"
    return f"{stat.mean:.{digits}f} ± {stat.std:.{digits}f}"


def _optional(value: float | None, digits: int = 3) -> str:
    return "-" if value is None else f"{value:.{digits}f}"


def progress_line(record: TrainRecord) -> Text:
    """One-line training progress for the live console."""
    line = Text.from_markup(
        f"[bold]{record.iteration:>6}[/bold]  loss {record.total:+.5f}  "
        f"[dim]sim {record.similarity:+.5f}  reg {record.regularizer_sum:.3f}[/dim]"
    )
    if record.val_dice_ext is not None and record.val_dice_reg is not None:
        line.append(
            f"  val ext {record.val_dice_ext:.3f} reg {record.val_dice_reg:.3f}", style="cyan"
        )
    return line


class RichRenderer:
    """Renders results as Rich tables.

    Dice cells are coloured by quality: green at 0.9 and above, yellow at
    0.5 and above, red below.
    """

    def __init__(self, console: Console | None = None) -> None:
        self._console = console or Console()

    @staticmethod
    def _dice_style(value: float | None) -> str:
        if value is None:
            return "dim"
        if value >= 0.9:
            return "green"
        if value >= 0.5:
            return "yellow"
        return "red"

    def build_summary_table(self, summary: MetricSummary, title: str = "Summary") -> Table:
        table = Table(title=title, title_style="bold")
        table.add_column("Metric", style="bold")
        table.add_column("Mean ± std", justify="right")
        table.add_column("Pairs", justify="right")
        rows = (
            ("Dice_ext", summary.dice_ext),
            ("Dice_reg", summary.dice_reg),
            ("Translation error (vox)", summary.translation_error),
            ("Components", summary.component_count),
        )
        for name, stat in rows:
            table.add_row(name, format_stat(stat), "-" if stat is None else str(stat.count))
        return table

    def build_report_table(self, report: EvaluationReport) -> Table:
        m, n = report.stages
        table = Table(title=f"Evaluation (M={m}, N={n})", title_style="bold")
        table.add_column("Pair", style="bold")
        table.add_column("Dice_ext", justify="right")
        table.add_column("Dice_reg", justify="right")
        table.add_column("Trans. err", justify="right")
        table.add_column("Comp.", justify="right")
        table.add_column("Loss", justify="right")
        for r in report.records:
            ext_style = self._dice_style(r.dice_ext)
            reg_style = self._dice_style(r.dice_reg)
            table.add_row(
                r.pair_id,
                f"[{ext_style}]{r.dice_ext:.4f}[/{ext_style}]",
                f"[{reg_style}]{r.dice_reg:.4f}[/{reg_style}]",
                _optional(r.translation_error, 2),
                str(r.component_count),
                _optional(r.total_loss, 4),
            )
        return table

    def render_report(self, report: EvaluationReport) -> None:
        if report.records:
            self._console.print(self.build_report_table(report))
        self._console.print(self.build_summary_table(report.summary))
        summary = report.summary
        if summary.degenerate:
            self._console.print(
                "[yellow]Both stage counts are zero: output is the unmodified source[/yellow]"
            )
        if summary.skipped:
            self._console.print(
                f"[yellow]{len(summary.skipped)} pair(s) skipped for missing truth[/yellow]"
            )

    def render_suites(self, results: Sequence[SuiteResult]) -> None:
        table = Table(title="Verification", title_style="bold")
        table.add_column("Suite")
        table.add_column("Check", style="bold")
        table.add_column("Cases", justify="right")
        table.add_column("Max error", justify="right")
        table.add_column("Tolerance", justify="right")
        table.add_column("Status")
        for r in results:
            status = "[green]pass[/green]" if r.passed else "[red]FAIL[/red]"
            table.add_row(
                r.suite, r.name, str(r.cases), f"{r.max_error:.2e}", f"{r.tolerance:.0e}", status
            )
        self._console.print(table)
        failed = sum(not r.passed for r in results)
        if failed:
            self._console.print(f"[bold red]{failed} of {len(results)} check(s) failed[/bold red]")
        else:
            self._console.print(f"[bold green]All {len(results)} checks passed[/bold green]")

    def render_ablation(self, cells: Sequence[AblationCell]) -> None:
        extraction = sorted({c.stages_extraction for c in cells})
        registration = sorted({c.stages_registration for c in cells})
        by_stage = {(c.stages_extraction, c.stages_registration): c for c in cells}

        table = Table(title="Stage ablation (Dice_ext / Dice_reg)", title_style="bold")
        table.add_column("M \\ N", style="bold")
        for n in registration:
            table.add_column(f"N={n}", justify="center")
        for m in extraction:
            row = [f"M={m}"]
            for n in registration:
                cell = by_stage.get((m, n))
                if cell is None:
                    row.append("[dim]-[/dim]")
                    continue
                ext = cell.summary.dice_ext
                reg = cell.summary.dice_reg
                row.append(
                    f"{_optional(None if ext is None else ext.mean)} / "
                    f"{_optional(None if reg is None else reg.mean)}"
                )
            table.add_row(*row)
        self._console.print(table)

    def render_sweep(self, points: Sequence[SweepPoint]) -> None:
        name = points[0].parameter if points else "value"
        table = Table(title=f"Sweep over {name}", title_style="bold")
        table.add_column(name, style="bold", justify="right")
        table.add_column("Dice_ext", justify="right")
        table.add_column("Dice_reg", justify="right")
        table.add_column("Final regularizer", justify="right")
        for p in points:
            table.add_row(
                f"{p.value:g}",
                format_stat(p.summary.dice_ext),
                format_stat(p.summary.dice_reg),
                _optional(p.final_regularizer),
            )
        self._console.print(table)

    def render_training(self, log: TrainingLog) -> None:
        if not log.records:
            self._console.print("[dim]No iterations were run[/dim]")
            return
        last = log.records[-1]
        self._console.print(
            Text.from_markup(
                f"Trained [bold]{last.iteration}[/bold] iterations, "
                f"final loss [bold]{last.total:+.5f}[/bold]"
            )
        )
        if log.best_iteration is not None and log.best_score is not None:
            self._console.print(
                f"Best validation score [green]{log.best_score:.4f}[/green] "
                f"at iteration {log.best_iteration}"
            )
        if log.checkpoint_dir is not None:
            self._console.print(f"Checkpoints in [bold]{log.checkpoint_dir}[/bold]")
