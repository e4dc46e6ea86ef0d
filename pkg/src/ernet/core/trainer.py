"""Unsupervised end-to-end training with Adam, validation and resumable checkpoints."""

from __future__ import annotations

import csv
import logging
import math
from typing import TYPE_CHECKING, Any

import numpy as np

from ernet.core.config import ModelConfig, TrainConfig
from ernet.core.models import Mode, TrainingLog, TrainRecord
from ernet.core.pipeline import ErnetModel, evaluate, forward, save_model
from ernet.data.augment import augment_pair
from ernet.tensorcore import (
    Adam,
    AdamState,
    CheckpointError,
    fresh_tape,
    load_checkpoint,
    save_checkpoint,
)

if TYPE_CHECKING:
    from collections.abc import Callable, Sequence
    from pathlib import Path

    from numpy.typing import NDArray

    from ernet.data.dataset import ImagePair

logger = logging.getLogger(__name__)

STATE_NAME = "state.ern"
BEST_DIR = "best"
FINAL_DIR = "final"
LOG_COLUMNS = (
    "iteration",
    "similarity",
    "regularizer_sum",
    "total",
    "val_dice_ext",
    "val_dice_reg",
)


class NonFiniteLossError(RuntimeError):
    """Raised when the training loss becomes NaN or infinite."""

    def __init__(self, iteration: int, value: float) -> None:
        self.iteration = iteration
        self.value = value
        super().__init__(f"Non-finite loss {value} at iteration {iteration}")


def _record_to_dict(record: TrainRecord) -> dict[str, Any]:
    return {name: getattr(record, name) for name in LOG_COLUMNS}


def write_log(path: Path, records: Sequence[TrainRecord]) -> None:
    """Write the training log as CSV; missing validation scores are empty cells."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(LOG_COLUMNS)
        for record in records:
            writer.writerow(
                ["" if value is None else repr(value) for value in _record_to_dict(record).values()]
            )


def save_training_state(
    path: Path,
    model: ErnetModel,
    optimizer: Adam,
    rng: np.random.Generator,
    *,
    iteration: int,
    best_iteration: int | None,
    best_score: float | None,
    records: Sequence[TrainRecord],
) -> None:
    """Everything needed to continue a run exactly where it stopped."""
    tensors: dict[str, NDArray[np.float64]] = {
        f"param/{name}": p.values for name, p in model.parameters().items()
    }
    for name, moment in optimizer.state.first_moment.items():
        tensors[f"adam_m/{name}"] = moment
    for name, moment in optimizer.state.second_moment.items():
        tensors[f"adam_v/{name}"] = moment
    meta = {
        "model": model.config.to_dict(),
        "iteration": iteration,
        "adam_step": optimizer.state.step,
        "rng_state": rng.bit_generator.state,
        "best_iteration": best_iteration,
        "best_score": best_score,
        "records": [_record_to_dict(r) for r in records],
    }
    save_checkpoint(path, tensors, meta=meta)


def _restore(
    path: Path, model: ErnetModel, rng: np.random.Generator
) -> tuple[AdamState, dict[str, Any]]:
    arrays, meta = load_checkpoint(path)
    try:
        model.load_state_arrays(
            {k.removeprefix("param/"): v for k, v in arrays.items() if k.startswith("param/")}
        )
        state = AdamState(
            step=int(meta["adam_step"]),
            first_moment={
                k.removeprefix("adam_m/"): v for k, v in arrays.items() if k.startswith("adam_m/")
            },
            second_moment={
                k.removeprefix("adam_v/"): v for k, v in arrays.items() if k.startswith("adam_v/")
            },
        )
        rng.bit_generator.state = meta["rng_state"]
    except (KeyError, TypeError, ValueError) as exc:
        msg = f"Training state {path} is incomplete: {exc}"
        raise CheckpointError(msg) from exc
    return state, meta


def train(
    model: ErnetModel,
    pairs: Sequence[ImagePair],
    config: TrainConfig,
    *,
    val_pairs: Sequence[ImagePair] = (),
    resume: Path | None = None,
    log_path: Path | None = None,
    progress: Callable[[TrainRecord], None] | None = None,
) -> TrainingLog:
    """Optimize both networks on one randomly drawn, augmented pair per step.

    Checkpoints land in ``config.checkpoint_dir``: the resumable state,
    the best validation model (mean Dice_ext + Dice_reg) and the final model.

    Raises:
        ValueError: If *pairs* is empty.
        NonFiniteLossError: If the loss is NaN or infinite at some iteration.
    """
    if not pairs:
        msg = "Training needs at least one pair"
        raise ValueError(msg)
    if model.stages == (0, 0):
        logger.warning("Both stage counts are zero: there is nothing to train")

    rng = np.random.default_rng(config.seed)
    records: list[TrainRecord] = []
    start = 1
    best_iteration: int | None = None
    best_score: float | None = None
    adam_state: AdamState | None = None
    if resume is not None:
        adam_state, meta = _restore(resume, model, rng)
        saved_config = ModelConfig.from_dict(meta["model"])
        if saved_config != model.config:
            msg = f"Training state {resume} was written for a different model configuration"
            raise CheckpointError(msg)
        start = int(meta["iteration"]) + 1
        best_iteration = meta.get("best_iteration")
        best_score = meta.get("best_score")
        records = [TrainRecord(**row) for row in meta.get("records", [])]
        logger.info("Resuming from %s at iteration %d", resume, start)

    optimizer = Adam(
        model.trainable_parameters(),
        lr=config.learning_rate,
        beta1=config.beta1,
        beta2=config.beta2,
        eps=config.eps,
        state=adam_state,
    )
    checkpoint_dir = config.checkpoint_dir

    for iteration in range(start, config.iterations + 1):
        pair = pairs[int(rng.integers(len(pairs)))]
        pair = augment_pair(pair, config.augmentation, rng)

        with fresh_tape():
            optimizer.zero_grad()
            result = forward(model, pair.source, pair.target, Mode.train)
            loss = result.loss
            assert loss is not None and loss.graph is not None
            if not math.isfinite(loss.total):
                raise NonFiniteLossError(iteration, loss.total)
            if loss.graph.requires_grad:
                loss.graph.backward()
                optimizer.step()

        val_ext: float | None = None
        val_reg: float | None = None
        last = iteration == config.iterations
        if val_pairs and config.validate_every and (iteration % config.validate_every == 0 or last):
            summary = evaluate(model, val_pairs).summary
            if summary.dice_ext is not None and summary.dice_reg is not None:
                val_ext, val_reg = summary.dice_ext.mean, summary.dice_reg.mean
                score = val_ext + val_reg
                if best_score is None or score > best_score:
                    best_score, best_iteration = score, iteration
                    save_model(model, checkpoint_dir / BEST_DIR, meta={"iteration": iteration})
                    logger.info("New best validation score %.4f at iteration %d", score, iteration)

        record = TrainRecord(
            iteration=iteration,
            similarity=loss.similarity,
            regularizer_sum=loss.regularizer_sum,
            total=loss.total,
            val_dice_ext=val_ext,
            val_dice_reg=val_reg,
        )
        records.append(record)
        if progress is not None:
            progress(record)
        if config.log_every and iteration % config.log_every == 0:
            logger.info(
                "iter %d  loss %.6f  sim %.6f  reg %.3f",
                iteration,
                record.total,
                record.similarity,
                record.regularizer_sum,
            )
        if config.checkpoint_every and (iteration % config.checkpoint_every == 0 or last):
            save_training_state(
                checkpoint_dir / STATE_NAME,
                model,
                optimizer,
                rng,
                iteration=iteration,
                best_iteration=best_iteration,
                best_score=best_score,
                records=records,
            )

    save_model(model, checkpoint_dir / FINAL_DIR, meta={"iteration": config.iterations})
    if log_path is not None:
        write_log(log_path, records)
    return TrainingLog(
        records=tuple(records),
        best_iteration=best_iteration,
        best_score=best_score,
        checkpoint_dir=checkpoint_dir,
    )
