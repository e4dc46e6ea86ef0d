"""Public API for ernet.core."""

from __future__ import annotations

from ernet.core.extraction import ExtractionNet, MaskPredictor, run_extraction
from ernet.core.geometry import (
    AffineTransform,
    Convention,
    CoordinateFrame,
    compose,
    invert,
    map_point,
    warp,
    warp_labels,
)
from ernet.core.models import (
    EvaluationReport,
    ExtractionTrace,
    ForwardResult,
    InferenceResult,
    LossBreakdown,
    MetricReport,
    MetricSummary,
    Mode,
    OutputMode,
    RegistrationTrace,
)
from ernet.core.objective import dice_ext, dice_reg, mask_smoothness, ncc_loss, total_loss
from ernet.core.registration import RegistrationNet, TransformPredictor, run_registration

__all__ = [
    "AffineTransform",
    "Convention",
    "CoordinateFrame",
    "EvaluationReport",
    "ExtractionNet",
    "ExtractionTrace",
    "ForwardResult",
    "InferenceResult",
    "LossBreakdown",
    "MaskPredictor",
    "MetricReport",
    "MetricSummary",
    "Mode",
    "OutputMode",
    "RegistrationNet",
    "RegistrationTrace",
    "TransformPredictor",
    "compose",
    "dice_ext",
    "dice_reg",
    "invert",
    "map_point",
    "mask_smoothness",
    "ncc_loss",
    "run_extraction",
    "run_registration",
    "total_loss",
    "warp",
    "warp_labels",
]
