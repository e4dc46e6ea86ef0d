"""Training loss (local cross-correlation plus mask smoothness) and evaluation metrics."""

from __future__ import annotations

from typing import TYPE_CHECKING, Literal

import numpy as np
from scipy import ndimage

from ernet.core.geometry import center_displacement, warp_labels
from ernet.core.models import LabelDice, LossBreakdown
from ernet.tensorcore import DiffTensor, ShapeError, box_sum, elementwise, reduce

if TYPE_CHECKING:
    from numpy.typing import ArrayLike, NDArray

    from ernet.core.geometry import AffineTransform, CoordinateFrame
    from ernet.core.models import ExtractionTrace

NCC_EPSILON = 1e-5
DEFAULT_WINDOW = 9

_SIX_CONNECTED = ndimage.generate_binary_structure(3, 1)


class MetricInputError(ValueError):
    """Raised when a metric receives a non-binary mask or mismatched shapes."""


def ncc_loss(warped: DiffTensor, target: DiffTensor, window: int = DEFAULT_WINDOW) -> DiffTensor:
    """Negative mean of the squared local correlation over ``window``-cubed neighbourhoods.

    Local statistics use only voxels inside the grid, so border windows are
    smaller.  The result lies in ``[-1, 0]``.

    Raises:
        ShapeError: If the volumes differ in shape.
        ValueError: If *window* is not a positive odd integer.
    """
    if warped.shape != target.shape:
        msg = f"Shape mismatch: warped {warped.shape} vs target {target.shape}"
        raise ShapeError(msg)
    if window < 1 or window % 2 == 0:
        msg = f"NCC window must be a positive odd integer, got {window}"
        raise ValueError(msg)

    count = box_sum(DiffTensor(np.ones(warped.shape)), window)
    i, j = warped, target
    i_sum = box_sum(i, window)
    j_sum = box_sum(j, window)
    i2_sum = box_sum(i * i, window)
    j2_sum = box_sum(j * j, window)
    ij_sum = box_sum(i * j, window)

    cross = ij_sum - i_sum * j_sum / count
    i_var = i2_sum - i_sum * i_sum / count
    j_var = j2_sum - j_sum * j_sum / count
    cc = cross * cross / (i_var * j_var + NCC_EPSILON)
    return -reduce(cc, "mean")


def mask_smoothness(mask: DiffTensor, reduction: Literal["sum", "mean"] = "sum") -> DiffTensor:
    """Squared forward differences along each axis, summed (or averaged per voxel).

    Differences whose ``+1`` neighbour lies outside the grid are omitted.
    """
    if mask.ndim != 3:
        msg = f"mask_smoothness expects a (W, H, D) mask, got shape {mask.shape}"
        raise ShapeError(msg)
    full = slice(None)
    total: DiffTensor | None = None
    for axis in range(3):
        if mask.shape[axis] < 2:
            continue
        hi = tuple(slice(1, None) if a == axis else full for a in range(3))
        lo = tuple(slice(None, -1) if a == axis else full for a in range(3))
        diff = mask[hi] - mask[lo]
        term = reduce(diff * diff, "sum")
        total = term if total is None else total + term
    if total is None:
        total = DiffTensor(0.0)
    if reduction == "mean":
        total = total / float(mask.size)
    return total


def total_loss(
    trace: ExtractionTrace,
    w_final: DiffTensor,
    target: DiffTensor,
    lam: float,
    window: int = DEFAULT_WINDOW,
    reduction: Literal["sum", "mean"] = "sum",
) -> LossBreakdown:
    """``ncc_loss(W^N, T) + lam * sum_j R(M^j)`` with the differentiable graph attached."""
    similarity = ncc_loss(w_final, target, window)
    regularizers = [mask_smoothness(m, reduction) for m in trace.masks]
    graph = similarity
    for term in regularizers:
        graph = graph + elementwise("mul", term, float(lam))
    return LossBreakdown(
        similarity=similarity.item(),
        regularizer_per_stage=tuple(r.item() for r in regularizers),
        lam=float(lam),
        total=graph.item(),
        graph=graph,
    )


def _binary(mask: ArrayLike, name: str) -> NDArray[np.bool_]:
    arr = np.asarray(mask)
    if arr.dtype != np.bool_ and not np.isin(arr, (0, 1)).all():
        msg = f"{name} mask must be binary (values 0 and 1 only)"
        raise MetricInputError(msg)
    return arr.astype(bool)


def dice_ext(predicted: ArrayLike, truth: ArrayLike) -> float:
    """Dice overlap of two binary brain masks.

    Two empty masks score 1.0; exactly one empty mask scores 0.0.

    Raises:
        MetricInputError: If a mask is not binary or the shapes differ.
    """
    a = _binary(predicted, "predicted")
    b = _binary(truth, "truth")
    if a.shape != b.shape:
        msg = f"Shape mismatch: predicted {a.shape} vs truth {b.shape}"
        raise MetricInputError(msg)
    size = int(a.sum()) + int(b.sum())
    if size == 0:
        return 1.0
    return 2.0 * int(np.logical_and(a, b).sum()) / size


def label_dice(warped: ArrayLike, target: ArrayLike) -> tuple[float, tuple[LabelDice, ...]]:
    """Mean per-label Dice over the nonzero labels present in either grid."""
    a = np.asarray(warped, dtype=np.int64)
    b = np.asarray(target, dtype=np.int64)
    if a.shape != b.shape:
        msg = f"Shape mismatch: warped labels {a.shape} vs target labels {b.shape}"
        raise MetricInputError(msg)
    labels = np.union1d(np.unique(a), np.unique(b))
    per_label: list[LabelDice] = []
    for label in labels[labels != 0]:
        in_a = a == label
        in_b = b == label
        score = 2.0 * int((in_a & in_b).sum()) / (int(in_a.sum()) + int(in_b.sum()))
        per_label.append(LabelDice(label=int(label), dice=score))
    if not per_label:
        return 1.0, ()
    return float(np.mean([d.dice for d in per_label])), tuple(per_label)


def dice_reg(
    seg_source: ArrayLike,
    seg_target: ArrayLike,
    t: AffineTransform,
    frame: CoordinateFrame,
) -> tuple[float, tuple[LabelDice, ...]]:
    """Warp the source labels (nearest neighbour) and score them against the target labels."""
    warped = warp_labels(np.asarray(seg_source, dtype=np.int64), t, frame)
    return label_dice(warped, seg_target)


def count_components(mask: ArrayLike) -> int:
    """Number of 6-connected foreground components."""
    arr = _binary(mask, "component")
    _, count = ndimage.label(arr, structure=_SIX_CONNECTED)
    return int(count)


def translation_error(
    predicted: AffineTransform, truth: AffineTransform, frame: CoordinateFrame
) -> float:
    """Distance in voxels between where the two transforms send the volume centre."""
    delta = center_displacement(predicted, frame) - center_displacement(truth, frame)
    return float(np.linalg.norm(delta))
