"""End-to-end ERNet: extraction cascade, registration cascade, inference and evaluation."""

from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from typing import TYPE_CHECKING, TypeVar

import numpy as np

from ernet.core.config import ModelConfig
from ernet.core.extraction import ExtractionNet, run_extraction
from ernet.core.geometry import AffineTransform, Convention, CoordinateFrame, write_transform
from ernet.core.models import (
    EvaluationReport,
    ExtractionTrace,
    ForwardResult,
    InferenceResult,
    MetricReport,
    MetricStat,
    MetricSummary,
    Mode,
    RegistrationTrace,
)
from ernet.core.objective import (
    count_components,
    dice_ext,
    dice_reg,
    total_loss,
    translation_error,
)
from ernet.core.registration import RegistrationNet, run_registration
from ernet.data.volume import Volume, write_volume
from ernet.tensorcore import (
    CheckpointError,
    DiffTensor,
    ShapeError,
    load_checkpoint,
    no_grad,
    save_checkpoint,
)

if TYPE_CHECKING:
    from collections.abc import Callable, Sequence
    from pathlib import Path

    from numpy.typing import NDArray

    from ernet.core.extraction import MaskPredictor
    from ernet.core.registration import TransformPredictor
    from ernet.data.dataset import ImagePair

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")

CHECKPOINT_NAME = "model.ern"
MANIFEST_NAME = "model.json"


class ErnetModel:
    """Extraction and registration networks plus the stage counts and loss weights.

    A stage count of zero disables that module.  Custom predictors (for
    example ground-truth oracles) can replace either network.
    """

    def __init__(
        self,
        config: ModelConfig | None = None,
        *,
        seed: int = 0,
        extraction: MaskPredictor | None = None,
        registration: TransformPredictor | None = None,
    ) -> None:
        self.config = config or ModelConfig()
        rng = np.random.default_rng(seed)
        cfg = self.config
        self.extraction: MaskPredictor = extraction or ExtractionNet(
            cfg.extraction_widths, gamma=cfg.gamma, rng=rng, head_bias=cfg.head_bias, leak=cfg.leak
        )
        self.registration: TransformPredictor = registration or RegistrationNet(
            cfg.registration_widths, rng=rng, dense_width=cfg.dense_width, leak=cfg.leak
        )

    @property
    def stages(self) -> tuple[int, int]:
        return self.config.stages

    def parameters(self) -> dict[str, DiffTensor]:
        """Every parameter of both networks."""
        return {**self.extraction.parameters(), **self.registration.parameters()}

    def trainable_parameters(self) -> dict[str, DiffTensor]:
        """Parameters of the enabled modules only."""
        params: dict[str, DiffTensor] = {}
        if self.config.stages_extraction > 0:
            params.update(self.extraction.parameters())
        if self.config.stages_registration > 0:
            params.update(self.registration.parameters())
        return params

    def state_arrays(self) -> dict[str, NDArray[np.float64]]:
        return {name: p.values.copy() for name, p in self.parameters().items()}

    def load_state_arrays(self, arrays: dict[str, NDArray[np.float64]]) -> None:
        """Replace parameter values in place of the current ones.

        Raises:
            CheckpointError: If names or shapes do not match this model.
        """
        params = self.parameters()
        missing = sorted(set(params) - set(arrays))
        extra = sorted(set(arrays) - set(params))
        if missing or extra:
            msg = (
                "Checkpoint parameters do not match the model "
                f"(missing={missing[:3]}, unexpected={extra[:3]})"
            )
            raise CheckpointError(msg)
        for name, p in params.items():
            if arrays[name].shape != p.shape:
                msg = (
                    f"Checkpoint tensor '{name}' has shape {arrays[name].shape}, "
                    f"model expects {p.shape}"
                )
                raise CheckpointError(msg)
            p.values = np.array(arrays[name], dtype=np.float64)


def save_model(
    model: ErnetModel, directory: Path, *, meta: dict[str, object] | None = None
) -> Path:
    """Write ``model.ern`` (parameters) and ``model.json`` (configuration) to *directory*."""
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / CHECKPOINT_NAME
    meta = {"model": model.config.to_dict(), **(meta or {})}
    save_checkpoint(path, model.state_arrays(), meta=meta)
    (directory / MANIFEST_NAME).write_text(
        json.dumps(model.config.to_dict(), indent=2) + "\n", encoding="utf-8"
    )
    return path


def load_model(path: Path) -> ErnetModel:
    """Load a model from a checkpoint file or a directory holding ``model.ern``.

    Raises:
        CheckpointError: If the file is invalid or does not describe a model.
    """
    if path.is_dir():
        path = path / CHECKPOINT_NAME
    arrays, meta = load_checkpoint(path)
    if "model" not in meta:
        msg = f"Checkpoint {path} has no model configuration"
        raise CheckpointError(msg)
    model = ErnetModel(ModelConfig.from_dict(meta["model"]))
    model.load_state_arrays(arrays)
    return model


def _as_tensor(volume: Volume | DiffTensor) -> DiffTensor:
    return volume if isinstance(volume, DiffTensor) else volume.as_tensor()


def forward(
    model: ErnetModel,
    source: Volume | DiffTensor,
    target: Volume | DiffTensor,
    mode: Mode = Mode.train,
) -> ForwardResult:
    """Run both cascades; in train mode the loss and its graph are attached.

    Raises:
        ShapeError: If source and target differ in shape.
    """
    s = _as_tensor(source)
    t = _as_tensor(target)
    if s.shape != t.shape:
        msg = f"Shape mismatch: source {s.shape} vs target {t.shape}"
        raise ShapeError(msg)
    m, n = model.stages
    cfg = model.config

    if m > 0:
        trace_e = run_extraction(model.extraction, s, m, mode)
    else:
        trace_e = ExtractionTrace(masks=(), extracted=(s,))

    if n > 0:
        trace_r = run_registration(
            model.registration, trace_e.final, t, n, CoordinateFrame.for_shape(s.shape)
        )
    else:
        identity = AffineTransform.identity().as_tensor()
        trace_r = RegistrationTrace(increments=(), combined=(identity,), warped=(trace_e.final,))

    loss = None
    if mode == Mode.train:
        loss = total_loss(
            trace_e, trace_r.final, t, cfg.lam, cfg.ncc_window, cfg.regularizer_reduction
        )
    return ForwardResult(mode=mode, extraction=trace_e, registration=trace_r, loss=loss)


def infer(
    model: ErnetModel, source: Volume | DiffTensor, target: Volume | DiffTensor
) -> InferenceResult:
    """Inference-mode forward pass returning plain arrays."""
    with no_grad():
        result = forward(model, source, target, Mode.infer)
    trace_e, trace_r = result.extraction, result.registration
    return InferenceResult(
        extracted=trace_e.final.values,
        mask=trace_e.cumulative_mask(),
        transform=trace_r.final_transform(),
        warped=trace_r.final.values,
        stage_masks=tuple(mask.values for mask in trace_e.masks),
        stage_warps=tuple(w.values for w in trace_r.warped[1:]),
    )


def write_inference(
    result: InferenceResult,
    directory: Path,
    *,
    extension: str = ".rvol",
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0),
) -> list[Path]:
    """Write every inference artifact under *directory* and return the paths.

    Files: ``extracted``, ``mask``, ``warped``, ``transform_normalized.txt``,
    ``transform_voxel.txt``, ``mask_stage{j}`` and ``warp_stage{k}``.
    """
    directory.mkdir(parents=True, exist_ok=True)
    frame = CoordinateFrame.for_shape(result.warped.shape)
    volumes: list[tuple[str, NDArray[np.float64], str]] = [
        ("extracted", result.extracted, "float64"),
        ("mask", result.mask, "uint8"),
        ("warped", result.warped, "float64"),
    ]
    volumes += [(f"mask_stage{j}", m, "uint8") for j, m in enumerate(result.stage_masks, start=1)]
    volumes += [(f"warp_stage{k}", w, "float64") for k, w in enumerate(result.stage_warps, start=1)]

    written: list[Path] = []
    for name, values, dtype in volumes:
        path = directory / f"{name}{extension}"
        write_volume(Volume(values, spacing=spacing, dtype=dtype), path)
        written.append(path)
    for convention, name in (
        (Convention.normalized, "transform_normalized.txt"),
        (Convention.voxel, "transform_voxel.txt"),
    ):
        path = directory / name
        write_transform(path, result.transform, frame, convention)
        written.append(path)
    return written


def resolve_workers(workers: int) -> int:
    """``0`` means one worker per CPU plus four (at most 32); ``1`` means serial."""
    if workers > 0:
        return workers
    return min(32, (os.cpu_count() or 1) + 4)


def run_parallel(items: Sequence[T], fn: Callable[[T], R], workers: int) -> list[R]:
    """Map *fn* over *items*, preserving order."""
    count = resolve_workers(workers)
    if count == 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=count) as executor:
        return list(executor.map(fn, items))


def evaluate_pair(model: ErnetModel, pair: ImagePair) -> MetricReport:
    """Metrics of one pair with ground truth (inference mode, no gradients).

    Raises:
        ValueError: If the pair lacks a mask, source labels or target labels.
    """
    if pair.mask is None or pair.labels is None or pair.target_labels is None:
        msg = f"Pair '{pair.pair_id}' has no ground-truth mask or labels"
        raise ValueError(msg)
    frame = pair.frame
    cfg = model.config
    with no_grad():
        result = forward(model, pair.source, pair.target, Mode.infer)
        loss = total_loss(
            result.extraction,
            result.output,
            pair.target.as_tensor(),
            cfg.lam,
            cfg.ncc_window,
            cfg.regularizer_reduction,
        )
    mask = result.extraction.cumulative_mask()
    transform = result.registration.final_transform()
    reg_score, per_label = dice_reg(pair.labels.values, pair.target_labels.values, transform, frame)
    return MetricReport(
        pair_id=pair.pair_id,
        dice_ext=dice_ext(mask, np.rint(pair.mask.values)),
        dice_reg=reg_score,
        per_label=per_label,
        component_count=count_components(mask),
        translation_error=(
            None
            if pair.truth_transform is None
            else translation_error(transform, pair.truth_transform, frame)
        ),
        similarity=loss.similarity,
        regularizer_sum=loss.regularizer_sum,
        total_loss=loss.total,
    )


def summarize(
    records: Sequence[MetricReport],
    *,
    skipped: Sequence[str] = (),
    degenerate: bool = False,
) -> MetricSummary:
    """Mean and population standard deviation of each metric."""
    errors = [r.translation_error for r in records if r.translation_error is not None]
    return MetricSummary(
        pair_count=len(records),
        dice_ext=MetricStat.of([r.dice_ext for r in records]),
        dice_reg=MetricStat.of([r.dice_reg for r in records]),
        translation_error=MetricStat.of(errors),
        component_count=MetricStat.of([float(r.component_count) for r in records]),
        skipped=tuple(skipped),
        degenerate=degenerate,
    )


def evaluate(
    model: ErnetModel, pairs: Sequence[ImagePair], *, workers: int = 1
) -> EvaluationReport:
    """Evaluate every pair with ground truth; others are skipped with a warning."""
    usable: list[ImagePair] = []
    skipped: list[str] = []
    for pair in pairs:
        if pair.has_truth:
            usable.append(pair)
        else:
            logger.warning("Skipping pair '%s': missing ground-truth mask or labels", pair.pair_id)
            skipped.append(pair.pair_id)

    degenerate = model.stages == (0, 0)
    if degenerate:
        logger.warning("Both stage counts are zero: the output is the unmodified source")

    records = run_parallel(usable, lambda pair: evaluate_pair(model, pair), workers)
    return EvaluationReport(
        stages=model.stages,
        records=tuple(records),
        summary=summarize(records, skipped=skipped, degenerate=degenerate),
    )
