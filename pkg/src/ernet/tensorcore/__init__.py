"""Public API for ernet.tensorcore."""

from __future__ import annotations

from ernet.tensorcore.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from ernet.tensorcore.ops import (
    box_sum,
    concat,
    conv3d,
    dense,
    elementwise,
    global_average_pool,
    heaviside,
    leaky_relu,
    pad_spatial,
    reduce,
    reshape,
    steep_sigmoid,
    take_slice,
    upsample_nearest2x,
)
from ernet.tensorcore.optim import Adam, AdamState, MissingGradientError
from ernet.tensorcore.tensor import (
    DiffTensor,
    ShapeError,
    Tape,
    current_tape,
    fresh_tape,
    no_grad,
)

__all__ = [
    "Adam",
    "AdamState",
    "CheckpointError",
    "DiffTensor",
    "MissingGradientError",
    "ShapeError",
    "Tape",
    "box_sum",
    "concat",
    "conv3d",
    "current_tape",
    "dense",
    "elementwise",
    "fresh_tape",
    "global_average_pool",
    "heaviside",
    "leaky_relu",
    "load_checkpoint",
    "no_grad",
    "pad_spatial",
    "reduce",
    "reshape",
    "save_checkpoint",
    "steep_sigmoid",
    "take_slice",
    "upsample_nearest2x",
]
