#!/usr/bin/env python3
"""Benchmark parallel evaluation in ernet.

Usage:
    uv run python benchmarks/bench_eval_workers.py [--pairs N] [--extent N] [--iters N]

Builds phantom pairs in memory, then evaluates a width-reduced untrained
model with different worker counts, reporting wall-clock time for each.
"""

from __future__ import annotations

import argparse
import time
from typing import TYPE_CHECKING

from rich.console import Console
from rich.table import Table

from ernet.core.config import ModelConfig
from ernet.core.pipeline import ErnetModel, evaluate
from ernet.data.dataset import pairs_from_phantoms

if TYPE_CHECKING:
    from collections.abc import Sequence

    from ernet.data.dataset import ImagePair


def run_benchmark(
    model: ErnetModel, pairs: Sequence[ImagePair], workers: int, iterations: int
) -> float:
    """Evaluate every pair and return average wall-clock seconds."""
    times: list[float] = []
    for _ in range(iterations):
        start = time.perf_counter()
        evaluate(model, pairs, workers=workers)
        times.append(time.perf_counter() - start)
    return sum(times) / len(times)


def main() -> None:
    """Run the benchmark suite."""
    parser = argparse.ArgumentParser(description="Benchmark parallel evaluation")
    parser.add_argument("--pairs", type=int, default=8, help="Number of phantom pairs")
    parser.add_argument("--extent", type=int, default=32, help="Cubic phantom extent")
    parser.add_argument("--stages", type=int, default=2, help="Stages of each module")
    parser.add_argument("--divisor", type=int, default=4, help="Layer width divisor")
    parser.add_argument("--iters", type=int, default=2, help="Iterations per configuration")
    args = parser.parse_args()

    console = Console()
    console.print(
        f"\nGenerating {args.pairs} phantom(s) of {args.extent}^3 voxels...\n", style="bold"
    )
    extents = (args.extent, args.extent, args.extent)
    pairs = pairs_from_phantoms(range(args.pairs), extents)
    config = ModelConfig(
        stages_extraction=args.stages, stages_registration=args.stages
    ).with_width_divisor(args.divisor)
    model = ErnetModel(config)

    table = Table(
        title=(
            f"pairs={args.pairs}  |  {args.extent}^3  |  M=N={args.stages}"
            f"  |  widths/{args.divisor}  |  {args.iters} iters"
        ),
    )
    table.add_column("Workers", style="cyan", justify="right")
    table.add_column("Avg Time (s)", style="green", justify="right")
    table.add_column("Speedup", style="yellow", justify="right")

    serial_time: float | None = None
    for workers in (1, 2, 4, 0):
        label = "auto" if workers == 0 else str(workers)
        avg = run_benchmark(model, pairs, workers, args.iters)
        if workers == 1:
            serial_time = avg
        speedup = f"{serial_time / avg:.2f}x" if serial_time else "baseline"
        table.add_row(label, f"{avg:.4f}", speedup)

    console.print(table)
    console.print()


if __name__ == "__main__":
    main()
