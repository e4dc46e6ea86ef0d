#!/usr/bin/env python3
"""Stage-count ablation on synthetic phantoms.

Usage:
    uv run python benchmarks/bench_ablation.py [--seed N] [--iterations N] [--divisor N]

Trains one model per (M, N) cell of the {0, 1, 5} grid from the same seed,
prints the Dice grid, then checks the expected trend: (5, 5) beats (1, 1)
by at least 0.02 on both Dice scores, and every cell without extraction or
without registration stays at Dice_reg <= 0.5.  Exit status 1 on a miss.
"""

from __future__ import annotations

import argparse
import sys
import tempfile
import time
from pathlib import Path
from typing import TYPE_CHECKING

from rich.console import Console
from rich.table import Table
from rich.text import Text

from ernet.core.config import ModelConfig, TrainConfig
from ernet.core.experiments import DEFAULT_GRID, ablate
from ernet.data.augment import preset
from ernet.data.dataset import pairs_from_phantoms
from ernet.output.rich_output import RichRenderer

if TYPE_CHECKING:
    from ernet.core.models import AblationCell, MetricStat

MIN_GAIN = 0.02
COLLAPSE_MAX = 0.5


def _mean(stat: MetricStat | None) -> float:
    return float("nan") if stat is None else stat.mean


def trend_checks(cells: list[AblationCell]) -> list[tuple[str, str, bool]]:
    """(description, observed, passed) for each trend requirement."""
    by_stage = {(c.stages_extraction, c.stages_registration): c.summary for c in cells}
    checks: list[tuple[str, str, bool]] = []
    deep, shallow = by_stage.get((5, 5)), by_stage.get((1, 1))
    if deep is not None and shallow is not None:
        for name in ("dice_ext", "dice_reg"):
            gain = _mean(getattr(deep, name)) - _mean(getattr(shallow, name))
            checks.append(
                (f"(5,5) - (1,1) {name} >= {MIN_GAIN}", f"{gain:+.4f}", gain >= MIN_GAIN)
            )
    for (m, n), summary in sorted(by_stage.items()):
        if m == 0 or n == 0:
            reg = _mean(summary.dice_reg)
            checks.append(
                (f"({m},{n}) dice_reg <= {COLLAPSE_MAX}", f"{reg:.4f}", reg <= COLLAPSE_MAX)
            )
    return checks


def main() -> int:
    """Run the ablation and return the exit status."""
    parser = argparse.ArgumentParser(description="Stage-count ablation trend")
    parser.add_argument("--seed", type=int, default=0, help="First phantom seed and train seed")
    parser.add_argument("--train", type=int, default=40, help="Training phantoms")
    parser.add_argument("--test", type=int, default=10, help="Held-out phantoms")
    parser.add_argument("--extent", type=int, default=32, help="Cubic phantom extent")
    parser.add_argument("--iterations", type=int, default=1000, help="Iterations per cell")
    parser.add_argument("--lr", type=float, default=1e-4, help="Adam learning rate")
    parser.add_argument("--divisor", type=int, default=4, help="Layer width divisor")
    parser.add_argument("--workers", type=int, default=0, help="Evaluation workers, 0 = auto")
    args = parser.parse_args()

    console = Console()
    extents = (args.extent, args.extent, args.extent)
    first_test = args.seed + args.train
    train_pairs = pairs_from_phantoms(range(args.seed, first_test), extents)
    test_pairs = pairs_from_phantoms(range(first_test, first_test + args.test), extents)
    model_config = ModelConfig(lam=1.0, gamma=10.0).with_width_divisor(args.divisor)

    start = time.perf_counter()
    with tempfile.TemporaryDirectory() as scratch:
        train_config = TrainConfig(
            learning_rate=args.lr,
            iterations=args.iterations,
            seed=args.seed,
            augmentation=preset("none"),
            validate_every=0,
            checkpoint_every=0,
            checkpoint_dir=Path(scratch),
        )
        with console.status(f"Training {len(DEFAULT_GRID)} cells..."):
            cells = ablate(
                model_config, train_config, train_pairs, test_pairs, workers=args.workers
            )
    elapsed = time.perf_counter() - start

    RichRenderer(console).render_ablation(cells)

    table = Table(
        title=(
            f"seed={args.seed}  |  {args.extent}^3  |  widths/{args.divisor}"
            f"  |  {args.iterations} iters/cell  |  {elapsed:.1f}s"
        ),
    )
    table.add_column("Requirement", style="cyan")
    table.add_column("Observed", style="green", justify="right")
    table.add_column("Result", justify="center")
    all_passed = True
    for description, observed, passed in trend_checks(cells):
        all_passed &= passed
        table.add_row(
            description,
            observed,
            Text("PASS", style="bold green") if passed else Text("FAIL", style="bold red"),
        )

    console.print(table)
    console.print()
    return 0 if all_passed else 1


if __name__ == "__main__":
    sys.exit(main())
