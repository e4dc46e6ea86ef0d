"""Stage-count ablations and hyperparameter sweeps."""

from __future__ import annotations

import dataclasses
import logging
from typing import TYPE_CHECKING, Literal

from ernet.core.models import AblationCell, SweepPoint
from ernet.core.pipeline import ErnetModel, evaluate
from ernet.core.trainer import train

if TYPE_CHECKING:
    from collections.abc import Callable, Iterable, Sequence

    from ernet.core.config import ModelConfig, TrainConfig
    from ernet.core.models import MetricSummary, TrainRecord
    from ernet.data.dataset import ImagePair

logger = logging.getLogger(__name__)

SweepParameter = Literal["lambda", "gamma"]

ABLATION_STAGES = (0, 1, 5)
DEFAULT_GRID: tuple[tuple[int, int], ...] = tuple(
    (m, n) for m in ABLATION_STAGES for n in ABLATION_STAGES
)
SWEEP_DEFAULTS: dict[str, tuple[float, ...]] = {
    "lambda": (0.0, 1.0, 10.0),
    "gamma": (0.1, 1.0, 10.0, 100.0, 1000.0),
}


def _train_and_score(
    model_config: ModelConfig,
    train_config: TrainConfig,
    train_pairs: Sequence[ImagePair],
    eval_pairs: Sequence[ImagePair],
    run_name: str,
    *,
    workers: int,
    progress: Callable[[TrainRecord], None] | None,
) -> tuple[MetricSummary, float | None]:
    model = ErnetModel(model_config, seed=train_config.seed)
    final_regularizer: float | None = None
    if model.stages != (0, 0):
        run_config = dataclasses.replace(
            train_config, checkpoint_dir=train_config.checkpoint_dir / run_name
        )
        log = train(model, train_pairs, run_config, progress=progress)
        if log.records:
            final_regularizer = log.records[-1].regularizer_sum
    summary = evaluate(model, eval_pairs, workers=workers).summary
    return summary, final_regularizer


def ablate(
    model_config: ModelConfig,
    train_config: TrainConfig,
    train_pairs: Sequence[ImagePair],
    eval_pairs: Sequence[ImagePair],
    *,
    grid: Iterable[tuple[int, int]] = DEFAULT_GRID,
    workers: int = 1,
    progress: Callable[[TrainRecord], None] | None = None,
) -> list[AblationCell]:
    """Train and evaluate one model per ``(M, N)`` stage pair.

    Every cell starts from the same seed, so cells differ only in their
    stage counts.  The ``(0, 0)`` cell is evaluated without training.
    """
    cells: list[AblationCell] = []
    for m, n in grid:
        logger.info("Ablation cell M=%d N=%d", m, n)
        config = dataclasses.replace(model_config, stages_extraction=m, stages_registration=n)
        summary, _ = _train_and_score(
            config,
            train_config,
            train_pairs,
            eval_pairs,
            f"ablate_m{m}_n{n}",
            workers=workers,
            progress=progress,
        )
        cells.append(AblationCell(stages_extraction=m, stages_registration=n, summary=summary))
    return cells


def sweep(
    parameter: SweepParameter,
    values: Iterable[float],
    model_config: ModelConfig,
    train_config: TrainConfig,
    train_pairs: Sequence[ImagePair],
    eval_pairs: Sequence[ImagePair],
    *,
    workers: int = 1,
    progress: Callable[[TrainRecord], None] | None = None,
) -> list[SweepPoint]:
    """Train one model per value of ``lambda`` or ``gamma``.

    Raises:
        ValueError: If *parameter* is not a sweepable hyperparameter.
    """
    if parameter not in SWEEP_DEFAULTS:
        msg = f"Cannot sweep '{parameter}'. Choose from: {', '.join(SWEEP_DEFAULTS)}"
        raise ValueError(msg)
    field_name = "lam" if parameter == "lambda" else "gamma"
    points: list[SweepPoint] = []
    for value in values:
        logger.info("Sweep %s=%g", parameter, value)
        config = dataclasses.replace(model_config, **{field_name: float(value)})
        summary, final_regularizer = _train_and_score(
            config,
            train_config,
            train_pairs,
            eval_pairs,
            f"sweep_{parameter}_{value:g}",
            workers=workers,
            progress=progress,
        )
        points.append(
            SweepPoint(
                parameter=parameter,
                value=float(value),
                summary=summary,
                final_regularizer=final_regularizer,
            )
        )
    return points
