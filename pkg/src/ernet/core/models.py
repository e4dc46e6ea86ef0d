"""Data models for ERNet forward passes, losses, metrics and training runs."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import StrEnum
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from pathlib import Path

    from numpy.typing import NDArray

    from ernet.core.geometry import AffineTransform
    from ernet.tensorcore import DiffTensor


class Mode(StrEnum):
    """Forward-pass mode: relaxed masks for training, binary masks for inference."""

    train = "train"
    infer = "infer"


class OutputMode(StrEnum):
    """Output format for rendering reports."""

    rich = "rich"
    json = "json"


@dataclass(frozen=True)
class ExtractionTrace:
    """Per-stage masks ``M^1..M^M`` and extracted images ``E^0..E^M``.

    ``extracted[0]`` is the source itself, so a disabled module has no masks
    and a single extracted image.
    """

    masks: tuple[DiffTensor, ...]
    extracted: tuple[DiffTensor, ...]

    @property
    def stages(self) -> int:
        return len(self.masks)

    @property
    def final(self) -> DiffTensor:
        return self.extracted[-1]

    def cumulative_mask(self) -> NDArray[np.float64]:
        """Elementwise product of every stage mask (all ones with no stages)."""
        total = np.ones(self.extracted[0].shape)
        for mask in self.masks:
            total = total * mask.values
        return total


@dataclass(frozen=True)
class RegistrationTrace:
    """Incremental transforms, combined transforms and warped images.

    ``combined[0]`` is the identity and ``warped[0]`` is the extracted image;
    every ``warped[k]`` is interpolated once from ``warped[0]``.
    """

    increments: tuple[DiffTensor, ...]
    combined: tuple[DiffTensor, ...]
    warped: tuple[DiffTensor, ...]

    @property
    def stages(self) -> int:
        return len(self.increments)

    @property
    def final(self) -> DiffTensor:
        return self.warped[-1]

    def final_transform(self) -> AffineTransform:
        from ernet.core.geometry import AffineTransform

        return AffineTransform.from_tensor(self.combined[-1])


@dataclass(frozen=True)
class LossBreakdown:
    """Similarity, per-stage regularizers and their weighted total.

    ``graph`` is the differentiable total; it is excluded from equality.
    """

    similarity: float
    regularizer_per_stage: tuple[float, ...]
    lam: float
    total: float
    graph: DiffTensor | None = field(default=None, compare=False, repr=False)

    @property
    def regularizer_sum(self) -> float:
        return float(sum(self.regularizer_per_stage))


@dataclass(frozen=True)
class ForwardResult:
    """Both traces of one forward pass plus the loss in train mode."""

    mode: Mode
    extraction: ExtractionTrace
    registration: RegistrationTrace
    loss: LossBreakdown | None = None

    @property
    def output(self) -> DiffTensor:
        return self.registration.final


@dataclass(frozen=True)
class InferenceResult:
    """Plain-array artifacts of an inference pass."""

    extracted: NDArray[np.float64]
    mask: NDArray[np.float64]
    transform: AffineTransform
    warped: NDArray[np.float64]
    stage_masks: tuple[NDArray[np.float64], ...] = ()
    stage_warps: tuple[NDArray[np.float64], ...] = ()


@dataclass(frozen=True)
class LabelDice:
    """Dice overlap of one anatomical label."""

    label: int
    dice: float


@dataclass(frozen=True)
class MetricReport:
    """Evaluation metrics of a single (source, target) pair."""

    pair_id: str
    dice_ext: float
    dice_reg: float
    per_label: tuple[LabelDice, ...]
    component_count: int
    translation_error: float | None = None
    similarity: float | None = None
    regularizer_sum: float | None = None
    total_loss: float | None = None


@dataclass(frozen=True)
class MetricStat:
    """Arithmetic mean and population standard deviation of one metric."""

    mean: float
    std: float
    count: int

    @classmethod
    def of(cls, values: list[float]) -> MetricStat | None:
        if not values:
            return None
        arr = np.asarray(values, dtype=np.float64)
        return cls(mean=float(arr.mean()), std=float(arr.std()), count=len(values))


@dataclass(frozen=True)
class MetricSummary:
    """Aggregate over the evaluated pairs (skipped pairs excluded)."""

    pair_count: int
    dice_ext: MetricStat | None = None
    dice_reg: MetricStat | None = None
    translation_error: MetricStat | None = None
    component_count: MetricStat | None = None
    skipped: tuple[str, ...] = ()
    degenerate: bool = False


@dataclass(frozen=True)
class EvaluationReport:
    """Per-pair reports and their summary for one model configuration."""

    stages: tuple[int, int]
    records: tuple[MetricReport, ...]
    summary: MetricSummary


@dataclass(frozen=True)
class TrainRecord:
    """One row of the training log."""

    iteration: int
    similarity: float
    regularizer_sum: float
    total: float
    val_dice_ext: float | None = None
    val_dice_reg: float | None = None


@dataclass(frozen=True)
class TrainingLog:
    """Result of a training run."""

    records: tuple[TrainRecord, ...]
    best_iteration: int | None
    best_score: float | None
    checkpoint_dir: Path | None = None


@dataclass(frozen=True)
class AblationCell:
    """Validation summary of one (M, N) stage configuration."""

    stages_extraction: int
    stages_registration: int
    summary: MetricSummary


@dataclass(frozen=True)
class SweepPoint:
    """Validation summary for one value of a swept hyperparameter."""

    parameter: str
    value: float
    summary: MetricSummary
    final_regularizer: float | None = None
