"""Multi-stage affine registration with a composition layer.

Stage ``k`` predicts an increment ``A_i^k`` from the previous warped image and
the target, accumulates ``A_c^k = A_i^k @ A_c^{k-1}`` and warps the extracted
image once with the combined transform.
"""

from __future__ import annotations

from typing import TYPE_CHECKING, Protocol, runtime_checkable

import numpy as np

from ernet.core.geometry import AffineTransform, compose_params, warp
from ernet.core.layers import ConvLayer, DenseLayer
from ernet.core.models import RegistrationTrace
from ernet.tensorcore import (
    DiffTensor,
    ShapeError,
    concat,
    elementwise,
    global_average_pool,
    pad_spatial,
    reshape,
)

if TYPE_CHECKING:
    from collections.abc import Sequence

    from ernet.core.geometry import CoordinateFrame

_IDENTITY = AffineTransform.identity().as_array()


@runtime_checkable
class TransformPredictor(Protocol):
    """Anything that predicts a 12-parameter increment from two volumes."""

    def predict(self, w_prev: DiffTensor, target: DiffTensor) -> DiffTensor:
        """Return the increment as a 12-vector in normalized-centered coordinates."""
        ...

    def parameters(self) -> dict[str, DiffTensor]:
        """Trainable tensors keyed by a stable name."""
        ...


class RegistrationNet:
    """Stride-2 convolutional encoder, global average pooling and two dense layers.

    The final dense layer starts at zero and its output is added to the
    identity, so a fresh network predicts exactly the identity transform.
    """

    def __init__(
        self,
        widths: Sequence[int],
        *,
        rng: np.random.Generator,
        dense_width: int = 128,
        leak: float = 0.2,
    ) -> None:
        if not widths:
            msg = "RegistrationNet needs at least one encoder width"
            raise ValueError(msg)
        self.widths = tuple(int(w) for w in widths)
        channels = (2, *self.widths)
        self.encoder = [
            ConvLayer.create(f"reg.enc{i}", c_in, c_out, rng, stride=2, leak=leak)
            for i, (c_in, c_out) in enumerate(zip(channels[:-1], channels[1:], strict=True))
        ]
        self.hidden = DenseLayer.create("reg.fc0", self.widths[-1], dense_width, rng, leak=leak)
        self.head = DenseLayer.create("reg.fc1", dense_width, 12, rng, leak=None, zero=True)

    @property
    def pad_multiple(self) -> int:
        return 2 ** len(self.encoder)

    def parameters(self) -> dict[str, DiffTensor]:
        layers: list[ConvLayer | DenseLayer] = [*self.encoder, self.hidden, self.head]
        return {name: p for layer in layers for name, p in layer.parameters()}

    def predict(self, w_prev: DiffTensor, target: DiffTensor) -> DiffTensor:
        """Identity plus the predicted residual, as a 12-vector.

        Raises:
            ShapeError: If the two volumes differ in shape.
        """
        if w_prev.shape != target.shape or w_prev.ndim != 3:
            msg = f"Shape mismatch: warped {w_prev.shape} vs target {target.shape}"
            raise ShapeError(msg)
        shape = w_prev.shape
        x = concat([reshape(w_prev, (1, *shape)), reshape(target, (1, *shape))])
        m = self.pad_multiple
        total = [(-n) % m for n in shape]
        before = [t // 2 for t in total]
        after = [t - b for t, b in zip(total, before, strict=True)]
        if any(total):
            x = pad_spatial(x, before, after)
        for layer in self.encoder:
            x = layer(x)
        residual = self.head(self.hidden(global_average_pool(x)))
        return elementwise("add", residual, DiffTensor(_IDENTITY))


def predict_increment(
    net: TransformPredictor, w_prev: DiffTensor, target: DiffTensor
) -> DiffTensor:
    """One stage's incremental affine transform.

    Raises:
        ShapeError: If *w_prev* and *target* differ in shape.
    """
    if w_prev.shape != target.shape:
        msg = f"Shape mismatch: warped {w_prev.shape} vs target {target.shape}"
        raise ShapeError(msg)
    return net.predict(w_prev, target)


def run_registration(
    net: TransformPredictor,
    e_final: DiffTensor,
    target: DiffTensor,
    stages: int,
    frame: CoordinateFrame,
) -> RegistrationTrace:
    """Cascade *stages* increments; every warp resamples *e_final* directly.

    Raises:
        ValueError: If *stages* is less than 1.
    """
    if stages < 1:
        msg = f"Registration needs at least one stage, got {stages}"
        raise ValueError(msg)
    increments: list[DiffTensor] = []
    combined = [DiffTensor(_IDENTITY)]
    warped = [e_final]
    for _ in range(stages):
        increment = predict_increment(net, warped[-1], target)
        total = compose_params(combined[-1], increment)
        increments.append(increment)
        combined.append(total)
        warped.append(warp(e_final, total, frame))
    return RegistrationTrace(
        increments=tuple(increments), combined=tuple(combined), warped=tuple(warped)
    )
