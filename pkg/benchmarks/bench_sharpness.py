#!/usr/bin/env python3
"""Compare one composed warp against repeated per-stage resampling.

Usage:
    uv run python benchmarks/bench_sharpness.py [--seed N] [--max-stages N]

For each stage count the ground-truth transform of a phantom is split into
equal increments.  The table reports the mean gradient magnitude of the
source resampled once (composed) and once per stage (sequential), and the
registration Dice reached by a cascade fed the exact increments.
"""

from __future__ import annotations

import argparse
import time

from rich.console import Console
from rich.table import Table

from ernet.core.config import ModelConfig
from ernet.core.geometry import warp_values
from ernet.core.pipeline import ErnetModel, evaluate_pair
from ernet.data.dataset import pairs_from_phantoms
from ernet.refcheck.oracles import (
    OracleMaskNet,
    OracleTransformNet,
    mean_gradient_magnitude,
    sequential_warp,
    stage_root,
)


def main() -> None:
    parser = argparse.ArgumentParser(description="Composed versus sequential resampling")
    parser.add_argument("--seed", type=int, default=0, help="Phantom seed")
    parser.add_argument("--extent", type=int, default=32, help="Cubic phantom extent")
    parser.add_argument("--max-stages", type=int, default=5, help="Largest stage count")
    args = parser.parse_args()

    console = Console()
    extents = (args.extent, args.extent, args.extent)
    (pair,) = pairs_from_phantoms([args.seed], extents)
    assert pair.mask is not None and pair.truth_transform is not None
    source = pair.source.values
    reference = mean_gradient_magnitude(pair.target.values)

    table = Table(
        title=(
            f"phantom seed={args.seed}  |  {args.extent}^3"
            f"  |  target sharpness {reference:.4f}"
        ),
    )
    table.add_column("Stages", style="cyan", justify="right")
    table.add_column("Composed", style="green", justify="right")
    table.add_column("Sequential", style="yellow", justify="right")
    table.add_column("Dice_reg", justify="right")
    table.add_column("Trans. err (vox)", justify="right")
    table.add_column("Time (s)", justify="right")

    for stages in range(1, args.max_stages + 1):
        start = time.perf_counter()
        root = stage_root(pair.truth_transform, stages)
        composed = warp_values(source, pair.truth_transform, pair.frame)
        sequential = sequential_warp(source, [root] * stages, pair.frame)
        model = ErnetModel(
            ModelConfig(stages_extraction=1, stages_registration=stages),
            extraction=OracleMaskNet(pair.mask.values),
            registration=OracleTransformNet(pair.truth_transform, stages),
        )
        metrics = evaluate_pair(model, pair)
        table.add_row(
            str(stages),
            f"{mean_gradient_magnitude(composed):.4f}",
            f"{mean_gradient_magnitude(sequential):.4f}",
            f"{metrics.dice_reg:.4f}",
            f"{metrics.translation_error or 0.0:.2e}",
            f"{time.perf_counter() - start:.2f}",
        )

    console.print(table)


if __name__ == "__main__":
    main()
