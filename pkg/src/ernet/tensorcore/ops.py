"""Differentiable primitives over :class:`DiffTensor`.

Each function computes its forward values with numpy and hands a closure
computing the vector-Jacobian product to :func:`make_result`.  Volumes are laid
out channel-first, ``(C, W, H, D)``; spatial operators act on the last three axes.
"""

from __future__ import annotations

from typing import TYPE_CHECKING, Literal

import numpy as np
from scipy import ndimage

from ernet.tensorcore.tensor import DiffTensor, ShapeError, as_tensor, make_result

if TYPE_CHECKING:
    from collections.abc import Sequence

    from numpy.typing import NDArray

ElementwiseKind = Literal["add", "sub", "mul", "div", "max"]
ReduceKind = Literal["sum", "mean"]

_SPATIAL = (-3, -2, -1)


def _check_pair(a: DiffTensor, b: DiffTensor) -> None:
    if b.size == 1 and b.ndim == 0:
        return
    if a.shape != b.shape:
        msg = f"Shape mismatch: {a.shape} vs {b.shape}"
        raise ShapeError(msg)


def _reduce_to(grad: NDArray[np.float64], target: DiffTensor) -> NDArray[np.float64]:
    """Sum a broadcast gradient back down to a scalar operand."""
    if target.shape == grad.shape:
        return grad
    return np.asarray(grad.sum()).reshape(target.shape)


def elementwise(kind: ElementwiseKind, a: DiffTensor, b: DiffTensor | float) -> DiffTensor:
    """Apply a binary elementwise operator.

    The second operand is either the same shape as *a* or a scalar.

    Raises:
        ShapeError: If the operand shapes differ and *b* is not a scalar.
        ValueError: If *kind* is unknown.
    """
    b = as_tensor(b)
    _check_pair(a, b)
    av, bv = a.values, b.values

    if kind == "add":
        values = av + bv

        def backward(g: NDArray[np.float64]) -> tuple[NDArray[np.float64], ...]:
            return g, _reduce_to(g, b)

    elif kind == "sub":
        values = av - bv

        def backward(g: NDArray[np.float64]) -> tuple[NDArray[np.float64], ...]:
            return g, _reduce_to(-g, b)

    elif kind == "mul":
        values = av * bv

        def backward(g: NDArray[np.float64]) -> tuple[NDArray[np.float64], ...]:
            return g * bv, _reduce_to(g * av, b)

    elif kind == "div":
        values = av / bv

        def backward(g: NDArray[np.float64]) -> tuple[NDArray[np.float64], ...]:
            return g / bv, _reduce_to(-g * av / (bv * bv), b)

    elif kind == "max":
        values = np.maximum(av, bv)
        # Ties send the gradient to the first operand.
        pick_a = av >= bv

        def backward(g: NDArray[np.float64]) -> tuple[NDArray[np.float64], ...]:
            return np.where(pick_a, g, 0.0), _reduce_to(np.where(pick_a, 0.0, g), b)

    else:
        msg = f"Unknown elementwise kind '{kind}'"
        raise ValueError(msg)

    return make_result(kind, np.asarray(values, dtype=np.float64), (a, b), backward)


def reduce(x: DiffTensor, kind: ReduceKind = "sum") -> DiffTensor:
    """Reduce all elements to a scalar by sum or mean."""
    if kind == "sum":
        scale = 1.0
    elif kind == "mean":
        scale = 1.0 / x.size
    else:
        msg = f"Unknown reduction '{kind}'"
        raise ValueError(msg)
    values = np.asarray(x.values.sum() * scale)

    def backward(g: NDArray[np.float64]) -> tuple[NDArray[np.float64]]:
        return (np.full(x.shape, float(g) * scale),)

    return make_result(f"reduce_{kind}", values, (x,), backward)


def steep_sigmoid(x: DiffTensor, gamma: float) -> DiffTensor:
    """Sigmoid with slope *gamma*: ``1 / (1 + exp(-gamma * x))``."""
    if gamma <= 0:
        msg = f"gamma must be positive, got {gamma}"
        raise ValueError(msg)
    # Split by sign so exp never overflows.
    z = gamma * x.values
    values = np.empty_like(z)
    pos = z >= 0
    values[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    values[~pos] = ez / (1.0 + ez)

    def backward(g: NDArray[np.float64]) -> tuple[NDArray[np.float64]]:
        return (g * gamma * values * (1.0 - values),)

    return make_result("steep_sigmoid", values, (x,), backward)


def heaviside(x: NDArray[np.float64] | DiffTensor) -> NDArray[np.float64]:
    """Binary step: 1 where ``x > 0``, else 0.  Not differentiable."""
    raw = x.values if isinstance(x, DiffTensor) else np.asarray(x, dtype=np.float64)
    return (raw > 0).astype(np.float64)


def leaky_relu(x: DiffTensor, slope: float = 0.2) -> DiffTensor:
    """Leaky-linear activation, *slope* applied to negative inputs."""
    factor = np.where(x.values > 0, 1.0, slope)
    values = x.values * factor

    def backward(g: NDArray[np.float64]) -> tuple[NDArray[np.float64]]:
        return (g * factor,)

    return make_result("leaky_relu", values, (x,), backward)


def take_slice(x: DiffTensor, index: tuple[slice | int, ...] | slice | int) -> DiffTensor:
    """Basic (view) indexing; the gradient is scattered back into a zero array."""
    values = np.array(x.values[index])

    def backward(g: NDArray[np.float64]) -> tuple[NDArray[np.float64]]:
        full = np.zeros(x.shape)
        full[index] = g
        return (full,)

    return make_result("slice", values, (x,), backward)


def reshape(x: DiffTensor, shape: Sequence[int]) -> DiffTensor:
    values = x.values.reshape(tuple(shape))

    def backward(g: NDArray[np.float64]) -> tuple[NDArray[np.float64]]:
        return (g.reshape(x.shape),)

    return make_result("reshape", values.copy(), (x,), backward)


def concat(tensors: Sequence[DiffTensor], axis: int = 0) -> DiffTensor:
    """Concatenate along *axis* (channel axis by default)."""
    if not tensors:
        msg = "concat needs at least one tensor"
        raise ValueError(msg)
    values = np.concatenate([t.values for t in tensors], axis=axis)
    bounds = np.cumsum([0, *(t.shape[axis] for t in tensors)])

    def backward(g: NDArray[np.float64]) -> list[NDArray[np.float64]]:
        return [
            np.take(g, np.arange(lo, hi), axis=axis)
            for lo, hi in zip(bounds[:-1], bounds[1:], strict=True)
        ]

    return make_result("concat", values, tuple(tensors), backward)


def pad_spatial(x: DiffTensor, before: Sequence[int], after: Sequence[int]) -> DiffTensor:
    """Zero-pad the three spatial axes of a ``(C, W, H, D)`` tensor."""
    spatial = [(int(b), int(a)) for b, a in zip(before, after, strict=True)]
    widths = [(0, 0)] * (x.ndim - 3) + spatial
    values = np.pad(x.values, widths)
    crop = tuple(slice(lo, lo + n) for (lo, _), n in zip(widths, x.shape, strict=True))

    def backward(g: NDArray[np.float64]) -> tuple[NDArray[np.float64]]:
        return (np.array(g[crop]),)

    return make_result("pad", values, (x,), backward)


def conv3d(
    x: DiffTensor,
    kernel: DiffTensor,
    bias: DiffTensor | None = None,
    *,
    stride: int = 1,
    padding: int = 0,
) -> DiffTensor:
    """3D cross-correlation of a ``(C_in, W, H, D)`` volume.

    Computed as one ``(C_out, C_in) x (C_in, N)`` matrix product per kernel
    offset, which keeps memory at the size of the output.

    Raises:
        ShapeError: If the kernel's input channels differ from ``x``'s channels.
        ValueError: If the kernel is not cubic and odd, or *stride* is not 1 or 2.
    """
    if x.ndim != 4 or kernel.ndim != 5:
        msg = f"conv3d expects (C, W, H, D) input and 5D kernel, got {x.shape} and {kernel.shape}"
        raise ShapeError(msg)
    c_out, c_in, k, k1, k2 = kernel.shape
    if c_in != x.shape[0]:
        msg = f"Channel mismatch: input has {x.shape[0]} channels, kernel expects {c_in}"
        raise ShapeError(msg)
    if not (k == k1 == k2) or k % 2 == 0:
        msg = f"Kernel must be cubic with odd extent, got {kernel.shape[2:]}"
        raise ValueError(msg)
    if stride not in (1, 2):
        msg = f"stride must be 1 or 2, got {stride}"
        raise ValueError(msg)
    if bias is not None and bias.shape != (c_out,):
        msg = f"Bias shape {bias.shape} does not match {c_out} output channels"
        raise ShapeError(msg)

    p = padding
    xp = np.pad(x.values, ((0, 0), (p, p), (p, p), (p, p)))
    out_shape = tuple((n + 2 * p - k) // stride + 1 for n in x.shape[1:])
    if min(out_shape) < 1:
        msg = f"Input {x.shape} too small for kernel {k} with padding {p}"
        raise ShapeError(msg)
    wo, ho, do = out_shape
    w = kernel.values

    def window(a: int, b: int, c: int) -> tuple[slice, ...]:
        return (
            slice(None),
            slice(a, a + stride * (wo - 1) + 1, stride),
            slice(b, b + stride * (ho - 1) + 1, stride),
            slice(c, c + stride * (do - 1) + 1, stride),
        )

    offsets = [(a, b, c) for a in range(k) for b in range(k) for c in range(k)]
    values = np.zeros((c_out, wo, ho, do))
    for a, b, c in offsets:
        values += np.tensordot(w[:, :, a, b, c], xp[window(a, b, c)], axes=([1], [0]))
    if bias is not None:
        values += bias.values[:, None, None, None]

    def backward(g: NDArray[np.float64]) -> list[NDArray[np.float64] | None]:
        g_xp = np.zeros_like(xp)
        g_w = np.zeros_like(w)
        for a, b, c in offsets:
            sl = window(a, b, c)
            g_w[:, :, a, b, c] = np.tensordot(g, xp[sl], axes=([1, 2, 3], [1, 2, 3]))
            g_xp[sl] += np.tensordot(w[:, :, a, b, c], g, axes=([0], [0]))
        g_x = g_xp[:, p : p + x.shape[1], p : p + x.shape[2], p : p + x.shape[3]]
        grads: list[NDArray[np.float64] | None] = [np.array(g_x), g_w]
        if bias is not None:
            grads.append(g.sum(axis=(1, 2, 3)))
        return grads

    inputs = (x, kernel) if bias is None else (x, kernel, bias)
    return make_result("conv3d", values, inputs, backward)


def upsample_nearest2x(x: DiffTensor) -> DiffTensor:
    """Double every spatial extent by voxel replication."""
    if x.ndim < 3:
        msg = f"upsample needs at least 3 spatial axes, got shape {x.shape}"
        raise ShapeError(msg)
    values = x.values
    for axis in _SPATIAL:
        values = np.repeat(values, 2, axis=axis)

    def backward(g: NDArray[np.float64]) -> tuple[NDArray[np.float64]]:
        lead = g.shape[:-3]
        w, h, d = (n // 2 for n in g.shape[-3:])
        blocks = g.reshape(*lead, w, 2, h, 2, d, 2)
        n = len(lead)
        return (blocks.sum(axis=(n + 1, n + 3, n + 5)),)

    return make_result("upsample_nearest2x", values, (x,), backward)


def dense(x: DiffTensor, weight: DiffTensor, bias: DiffTensor) -> DiffTensor:
    """Affine map ``weight @ x + bias``.

    Raises:
        ShapeError: If the inner dimensions disagree.
    """
    if x.ndim != 1 or weight.ndim != 2 or weight.shape[1] != x.shape[0]:
        msg = f"dense: weight {weight.shape} incompatible with input {x.shape}"
        raise ShapeError(msg)
    if bias.shape != (weight.shape[0],):
        msg = f"dense: bias {bias.shape} incompatible with weight {weight.shape}"
        raise ShapeError(msg)
    values = weight.values @ x.values + bias.values

    def backward(g: NDArray[np.float64]) -> tuple[NDArray[np.float64], ...]:
        return weight.values.T @ g, np.outer(g, x.values), g

    return make_result("dense", values, (x, weight, bias), backward)


def global_average_pool(x: DiffTensor) -> DiffTensor:
    """Average the spatial axes of a ``(C, W, H, D)`` tensor to ``(C,)``."""
    n = int(np.prod(x.shape[1:]))
    values = x.values.mean(axis=(1, 2, 3))

    def backward(g: NDArray[np.float64]) -> tuple[NDArray[np.float64]]:
        return (np.broadcast_to(g[:, None, None, None] / n, x.shape).copy(),)

    return make_result("global_average_pool", values, (x,), backward)


def box_sum(x: DiffTensor, window: int) -> DiffTensor:
    """Sum over a centred cubic window, treating voxels outside the grid as zero.

    The operator is self-adjoint for odd windows, so the backward pass applies
    the same filter to the incoming gradient.
    """
    if window % 2 == 0 or window < 1:
        msg = f"window must be a positive odd integer, got {window}"
        raise ValueError(msg)
    scale = float(window**3)

    def apply(v: NDArray[np.float64]) -> NDArray[np.float64]:
        size = [1] * (v.ndim - 3) + [window] * 3
        return np.asarray(ndimage.uniform_filter(v, size=size, mode="constant", cval=0.0)) * scale

    values = apply(x.values)

    def backward(g: NDArray[np.float64]) -> tuple[NDArray[np.float64]]:
        return (apply(g),)

    return make_result("box_sum", values, (x,), backward)
