#!/usr/bin/env python3
"""Train on synthetic phantoms and check end-to-end recovery.

Usage:
    uv run python benchmarks/bench_recovery.py [--seed N] [--iterations N] [--divisor N]

Trains a 5+5 stage model (lambda=1, gamma=10) on 40 phantoms and evaluates it
on 10 held-out ones.  The table compares the test means with the recovery
thresholds; the exit status is 1 when any threshold is missed.
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
from ernet.core.pipeline import ErnetModel, evaluate
from ernet.core.trainer import train
from ernet.data.augment import preset
from ernet.data.dataset import pairs_from_phantoms

if TYPE_CHECKING:
    from ernet.core.models import MetricStat

DICE_EXT_MIN = 0.90
TRANSLATION_MAX = 1.5
DICE_REG_MIN = 0.85


def check(stat: MetricStat | None, threshold: float, *, below: bool) -> bool:
    """Whether the mean of *stat* is on the passing side of *threshold*."""
    if stat is None:
        return False
    return stat.mean < threshold if below else stat.mean >= threshold


def main() -> int:
    """Run the recovery benchmark and return the exit status."""
    parser = argparse.ArgumentParser(description="Synthetic end-to-end recovery")
    parser.add_argument("--seed", type=int, default=0, help="First phantom seed and train seed")
    parser.add_argument("--train", type=int, default=40, help="Training phantoms")
    parser.add_argument("--test", type=int, default=10, help="Held-out phantoms")
    parser.add_argument("--extent", type=int, default=32, help="Cubic phantom extent")
    parser.add_argument("--stages", type=int, default=5, help="Stages of each module")
    parser.add_argument("--iterations", type=int, default=2000, help="Training iterations")
    parser.add_argument("--lr", type=float, default=1e-4, help="Adam learning rate")
    parser.add_argument("--divisor", type=int, default=4, help="Layer width divisor")
    parser.add_argument("--augment", default="none", help="Augmentation preset")
    parser.add_argument("--workers", type=int, default=0, help="Evaluation workers, 0 = auto")
    args = parser.parse_args()

    console = Console()
    extents = (args.extent, args.extent, args.extent)
    first_test = args.seed + args.train
    console.print(
        f"\nGenerating {args.train}+{args.test} phantom(s) of {args.extent}^3 voxels...\n",
        style="bold",
    )
    train_pairs = pairs_from_phantoms(range(args.seed, first_test), extents)
    test_pairs = pairs_from_phantoms(range(first_test, first_test + args.test), extents)

    model_config = ModelConfig(
        stages_extraction=args.stages, stages_registration=args.stages, lam=1.0, gamma=10.0
    ).with_width_divisor(args.divisor)
    model = ErnetModel(model_config, seed=args.seed)

    start = time.perf_counter()
    with tempfile.TemporaryDirectory() as scratch:
        train_config = TrainConfig(
            learning_rate=args.lr,
            iterations=args.iterations,
            seed=args.seed,
            augmentation=preset(args.augment),
            validate_every=0,
            checkpoint_every=0,
            checkpoint_dir=Path(scratch),
        )
        with console.status(f"Training {args.iterations} iterations..."):
            log = train(model, train_pairs, train_config)
    trained = time.perf_counter() - start
    summary = evaluate(model, test_pairs, workers=args.workers).summary
    elapsed = time.perf_counter() - start

    final_loss = log.records[-1].total if log.records else float("nan")
    table = Table(
        title=(
            f"seed={args.seed}  |  {args.extent}^3  |  M=N={args.stages}"
            f"  |  widths/{args.divisor}  |  {args.iterations} iters"
            f"  |  final loss {final_loss:.4f}"
        ),
    )
    table.add_column("Metric", style="cyan")
    table.add_column("Mean", style="green", justify="right")
    table.add_column("Std", justify="right")
    table.add_column("Threshold", justify="right")
    table.add_column("Result", justify="center")

    rows = [
        ("Dice_ext", summary.dice_ext, f">= {DICE_EXT_MIN}", DICE_EXT_MIN, False),
        (
            "Translation error (vox)",
            summary.translation_error,
            f"< {TRANSLATION_MAX}",
            TRANSLATION_MAX,
            True,
        ),
        ("Dice_reg", summary.dice_reg, f">= {DICE_REG_MIN}", DICE_REG_MIN, False),
    ]
    all_passed = True
    for name, stat, label, threshold, below in rows:
        passed = check(stat, threshold, below=below)
        all_passed &= passed
        table.add_row(
            name,
            "-" if stat is None else f"{stat.mean:.4f}",
            "-" if stat is None else f"{stat.std:.4f}",
            label,
            Text("PASS", style="bold green") if passed else Text("FAIL", style="bold red"),
        )

    console.print(table)
    console.print(f"Training {trained:.1f}s, total {elapsed:.1f}s\n")
    return 0 if all_passed else 1


if __name__ == "__main__":
    sys.exit(main())
