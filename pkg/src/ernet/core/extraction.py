"""Multi-stage brain extraction: a shared-weight U-Net mask predictor and the overlay layer.

Each stage predicts a mask from the previous extracted image and multiplies it
in.  Training uses the steep-sigmoid relaxation of the step function so the
cascade stays differentiable; inference thresholds the logits.
"""

from __future__ import annotations

from typing import TYPE_CHECKING, Protocol, runtime_checkable

import numpy as np

from ernet.core.layers import ConvLayer
from ernet.core.models import ExtractionTrace, Mode
from ernet.tensorcore import (
    DiffTensor,
    ShapeError,
    concat,
    elementwise,
    heaviside,
    reshape,
    steep_sigmoid,
    upsample_nearest2x,
)

if TYPE_CHECKING:
    from collections.abc import Sequence

_LEVELS = 2


@runtime_checkable
class MaskPredictor(Protocol):
    """Anything that maps an extracted image to per-voxel mask logits."""

    gamma: float

    def logits(self, volume: DiffTensor) -> DiffTensor:
        """Return logits with the same ``(W, H, D)`` shape as *volume*."""
        ...

    def parameters(self) -> dict[str, DiffTensor]:
        """Trainable tensors keyed by a stable name."""
        ...


class ExtractionNet:
    """U-Net with two stride-2 levels, skip concatenation and a 1-channel head.

    Args:
        widths: Ten channel counts, five encoder then five decoder layers.
        gamma: Slope of the training-mode sigmoid.
        rng: Source of the initial weights.
        head_bias: Initial output bias in logits (positive keeps most voxels).
        leak: Negative slope of the leaky activations.
    """

    def __init__(
        self,
        widths: Sequence[int],
        *,
        gamma: float,
        rng: np.random.Generator,
        head_bias: float = 0.5,
        leak: float = 0.2,
    ) -> None:
        if len(widths) != 10:
            msg = f"ExtractionNet needs 10 layer widths, got {len(widths)}"
            raise ValueError(msg)
        if gamma <= 0:
            msg = f"gamma must be positive, got {gamma}"
            raise ValueError(msg)
        self.gamma = float(gamma)
        self.widths = tuple(int(w) for w in widths)
        w = self.widths

        def conv(name: str, c_in: int, c_out: int, stride: int = 1) -> ConvLayer:
            return ConvLayer.create(name, c_in, c_out, rng, stride=stride, leak=leak)

        self.encoder = [
            conv("ext.enc0", 1, w[0]),
            conv("ext.enc1", w[0], w[1], stride=2),
            conv("ext.enc2", w[1], w[2]),
            conv("ext.enc3", w[2], w[3], stride=2),
            conv("ext.enc4", w[3], w[4]),
        ]
        self.decoder = [
            conv("ext.dec0", w[4], w[5]),
            conv("ext.dec1", w[5] + w[2], w[6]),
            conv("ext.dec2", w[6], w[7]),
            conv("ext.dec3", w[7] + w[0], w[8]),
            conv("ext.dec4", w[8], w[9]),
        ]
        self.head = ConvLayer.create(
            "ext.head", w[9], 1, rng, leak=None, gain=0.01, bias=head_bias
        )

    def layers(self) -> list[ConvLayer]:
        return [*self.encoder, *self.decoder, self.head]

    def parameters(self) -> dict[str, DiffTensor]:
        return {name: p for layer in self.layers() for name, p in layer.parameters()}

    def logits(self, volume: DiffTensor) -> DiffTensor:
        """Per-voxel logits for a ``(W, H, D)`` volume.

        Raises:
            ShapeError: If an extent is not divisible by 4.
        """
        if volume.ndim != 3:
            msg = f"Extraction input must be a (W, H, D) volume, got shape {volume.shape}"
            raise ShapeError(msg)
        factor = 2**_LEVELS
        if any(n % factor for n in volume.shape):
            msg = f"Extraction input extents must be divisible by {factor}, got {volume.shape}"
            raise ShapeError(msg)

        enc = self.encoder
        dec = self.decoder
        a0 = enc[0](reshape(volume, (1, *volume.shape)))
        a2 = enc[2](enc[1](a0))
        a4 = enc[4](enc[3](a2))
        d = dec[0](a4)
        d = dec[1](concat([upsample_nearest2x(d), a2]))
        d = dec[2](d)
        d = dec[3](concat([upsample_nearest2x(d), a0]))
        d = dec[4](d)
        return reshape(self.head(d), volume.shape)


def predict_mask(net: MaskPredictor, e_prev: DiffTensor, mode: Mode) -> DiffTensor:
    """Stage mask: relaxed sigmoid in train mode, hard threshold in infer mode."""
    logits = net.logits(e_prev)
    if mode == Mode.train:
        return steep_sigmoid(logits, net.gamma)
    return DiffTensor(heaviside(logits))


def overlay(e_prev: DiffTensor, mask: DiffTensor) -> DiffTensor:
    """Elementwise product of an image with a mask.

    Raises:
        ShapeError: If the shapes differ.
    """
    if e_prev.shape != mask.shape:
        msg = f"Shape mismatch: image {e_prev.shape} vs mask {mask.shape}"
        raise ShapeError(msg)
    return elementwise("mul", e_prev, mask)


def run_extraction(
    net: MaskPredictor, source: DiffTensor, stages: int, mode: Mode
) -> ExtractionTrace:
    """Apply the shared predictor *stages* times, overlaying each mask in turn.

    Raises:
        ValueError: If *stages* is less than 1.
    """
    if stages < 1:
        msg = f"Extraction needs at least one stage, got {stages}"
        raise ValueError(msg)
    masks: list[DiffTensor] = []
    extracted = [source]
    for _ in range(stages):
        mask = predict_mask(net, extracted[-1], mode)
        masks.append(mask)
        extracted.append(overlay(extracted[-1], mask))
    return ExtractionTrace(masks=tuple(masks), extracted=tuple(extracted))
