"""Brute-force reference implementations.

Every function here is a direct nested-loop evaluation of its formula and
shares no code with the fast paths in :mod:`ernet.tensorcore`,
:mod:`ernet.core.geometry` and :mod:`ernet.core.objective`.  They are slow
on purpose and only run in tests and ``ernet verify``.
"""

from __future__ import annotations

import itertools
from collections import deque
from typing import TYPE_CHECKING

import numpy as np
from scipy.linalg import fractional_matrix_power

from ernet.core.geometry import AffineTransform, warp_values
from ernet.tensorcore import DiffTensor, ShapeError

if TYPE_CHECKING:
    from collections.abc import Callable, Sequence

    from numpy.typing import ArrayLike, NDArray

    from ernet.core.geometry import CoordinateFrame


# ---------------------------------------------------------------------------
# Differentiation
# ---------------------------------------------------------------------------


def fd_gradient(
    fn: Callable[[NDArray[np.float64]], float],
    x: ArrayLike,
    h: float = 1e-5,
    *,
    indices: Sequence[int] | None = None,
) -> NDArray[np.float64]:
    """Central finite-difference gradient of a scalar function of an array.

    Args:
        fn: Pure function of one array returning a float.
        x: Point of evaluation.
        h: Step size.
        indices: Flat indices to differentiate; others are left at zero.
    """
    if h <= 0:
        msg = f"Step size must be positive, got {h}"
        raise ValueError(msg)
    base = np.array(x, dtype=np.float64)
    grad = np.zeros_like(base)
    flat_grad = grad.reshape(-1)
    for i in range(base.size) if indices is None else indices:
        shifted = base.copy()
        flat = shifted.reshape(-1)
        flat[i] = base.reshape(-1)[i] + h
        upper = fn(shifted)
        flat[i] = base.reshape(-1)[i] - h
        lower = fn(shifted)
        flat_grad[i] = (upper - lower) / (2.0 * h)
    return grad


# ---------------------------------------------------------------------------
# Layers and losses
# ---------------------------------------------------------------------------


def naive_conv(
    x: NDArray[np.float64],
    kernel: NDArray[np.float64],
    bias: NDArray[np.float64] | None = None,
    *,
    stride: int = 1,
    padding: int = 0,
) -> NDArray[np.float64]:
    """Cross-correlation of a ``(C_in, W, H, D)`` grid, one output value at a time."""
    c_out, c_in, k = kernel.shape[0], kernel.shape[1], kernel.shape[2]
    if x.shape[0] != c_in:
        msg = f"Channel mismatch: input has {x.shape[0]} channels, kernel expects {c_in}"
        raise ShapeError(msg)
    _, w, h, d = x.shape
    wo = (w + 2 * padding - k) // stride + 1
    ho = (h + 2 * padding - k) // stride + 1
    do = (d + 2 * padding - k) // stride + 1
    out = np.zeros((c_out, wo, ho, do))
    for o in range(c_out):
        for i in range(wo):
            for j in range(ho):
                for m in range(do):
                    total = 0.0 if bias is None else float(bias[o])
                    for c in range(c_in):
                        for a in range(k):
                            xi = i * stride + a - padding
                            if not 0 <= xi < w:
                                continue
                            for b in range(k):
                                yi = j * stride + b - padding
                                if not 0 <= yi < h:
                                    continue
                                for e in range(k):
                                    zi = m * stride + e - padding
                                    if 0 <= zi < d:
                                        total += kernel[o, c, a, b, e] * x[c, xi, yi, zi]
                    out[o, i, j, m] = total
    return out


def naive_map_point(matrix: ArrayLike, point: Sequence[float]) -> NDArray[np.float64]:
    """Homogeneous multiply written out as sums."""
    a = np.asarray(matrix, dtype=np.float64)
    homogeneous = [float(point[0]), float(point[1]), float(point[2]), 1.0]
    result = [sum(a[r, c] * homogeneous[c] for c in range(4)) for r in range(3)]
    return np.array(result)


def naive_warp(source: NDArray[np.float64], params: ArrayLike) -> NDArray[np.float64]:
    """Backward warp evaluated with hat weights ``max(0, 1 - |x - i|)`` per voxel.

    *params* are the 12 normalized-centered transform entries.  Grid voxels
    with a zero weight are skipped, which is exactly the out-of-bounds rule.
    """
    a = np.asarray(params, dtype=np.float64).reshape(3, 4)
    w, h, d = source.shape
    half = ((w - 1) / 2.0, (h - 1) / 2.0, (d - 1) / 2.0)
    out = np.zeros(source.shape)
    for x, y, z in itertools.product(range(w), range(h), range(d)):
        u = (x / half[0] - 1.0, y / half[1] - 1.0, z / half[2] - 1.0)
        coord = [
            (a[r, 0] * u[0] + a[r, 1] * u[1] + a[r, 2] * u[2] + a[r, 3] + 1.0) * half[r]
            for r in range(3)
        ]
        total = 0.0
        for i in range(w):
            wx = max(0.0, 1.0 - abs(coord[0] - i))
            if wx == 0.0:
                continue
            for j in range(h):
                wy = max(0.0, 1.0 - abs(coord[1] - j))
                if wy == 0.0:
                    continue
                for k in range(d):
                    wz = max(0.0, 1.0 - abs(coord[2] - k))
                    if wz != 0.0:
                        total += source[i, j, k] * wx * wy * wz
        out[x, y, z] = total
    return out


def naive_ncc(
    warped: NDArray[np.float64],
    target: NDArray[np.float64],
    window: int = 9,
    eps: float = 1e-5,
) -> float:
    """Negative mean squared local correlation, with means subtracted explicitly."""
    r = window // 2
    w, h, d = warped.shape
    total = 0.0
    for x, y, z in itertools.product(range(w), range(h), range(d)):
        pairs = [
            (warped[i, j, k], target[i, j, k])
            for i in range(max(0, x - r), min(w, x + r + 1))
            for j in range(max(0, y - r), min(h, y + r + 1))
            for k in range(max(0, z - r), min(d, z + r + 1))
        ]
        mean_i = sum(p for p, _ in pairs) / len(pairs)
        mean_j = sum(q for _, q in pairs) / len(pairs)
        cross = sum((p - mean_i) * (q - mean_j) for p, q in pairs)
        var_i = sum((p - mean_i) ** 2 for p, _ in pairs)
        var_j = sum((q - mean_j) ** 2 for _, q in pairs)
        total += cross * cross / (var_i * var_j + eps)
    return -total / (w * h * d)


def naive_smoothness(mask: NDArray[np.float64]) -> float:
    """Sum of squared forward differences along every axis."""
    w, h, d = mask.shape
    total = 0.0
    for x, y, z in itertools.product(range(w), range(h), range(d)):
        for dx, dy, dz in ((1, 0, 0), (0, 1, 0), (0, 0, 1)):
            nx, ny, nz = x + dx, y + dy, z + dz
            if nx < w and ny < h and nz < d:
                total += (mask[nx, ny, nz] - mask[x, y, z]) ** 2
    return total


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


def naive_dice(a: ArrayLike, b: ArrayLike) -> float:
    """Dice by enumerating the voxel index sets of both masks."""
    set_a = {tuple(int(i) for i in idx) for idx in np.argwhere(np.asarray(a) > 0)}
    set_b = {tuple(int(i) for i in idx) for idx in np.argwhere(np.asarray(b) > 0)}
    if not set_a and not set_b:
        return 1.0
    return 2.0 * len(set_a & set_b) / (len(set_a) + len(set_b))


def bfs_components(mask: ArrayLike) -> int:
    """Count 6-connected foreground components by breadth-first search."""
    grid = np.asarray(mask) > 0
    seen = np.zeros(grid.shape, dtype=bool)
    count = 0
    steps = ((1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1))
    for start in itertools.product(*(range(n) for n in grid.shape)):
        if not grid[start] or seen[start]:
            continue
        count += 1
        seen[start] = True
        queue = deque([start])
        while queue:
            x, y, z = queue.popleft()
            for dx, dy, dz in steps:
                n = (x + dx, y + dy, z + dz)
                inside = all(0 <= n[a] < grid.shape[a] for a in range(3))
                if inside and grid[n] and not seen[n]:
                    seen[n] = True
                    queue.append(n)
    return count


# ---------------------------------------------------------------------------
# Ground-truth predictors
# ---------------------------------------------------------------------------


class OracleMaskNet:
    """Mask predictor that returns logits of ``+margin`` inside a known mask."""

    def __init__(self, truth_mask: ArrayLike, *, gamma: float = 10.0, margin: float = 1.0) -> None:
        self.gamma = gamma
        self._logits = np.where(np.asarray(truth_mask) > 0.5, margin, -margin).astype(np.float64)

    def logits(self, volume: DiffTensor) -> DiffTensor:
        if volume.shape != self._logits.shape:
            msg = f"Oracle mask has shape {self._logits.shape}, input has {volume.shape}"
            raise ShapeError(msg)
        return DiffTensor(self._logits)

    def parameters(self) -> dict[str, DiffTensor]:
        return {}


def stage_root(truth: AffineTransform, stages: int) -> AffineTransform:
    """The increment whose *stages*-fold composition equals *truth*."""
    if stages < 1:
        msg = f"stages must be >= 1, got {stages}"
        raise ValueError(msg)
    root = np.real(fractional_matrix_power(truth.matrix(), 1.0 / stages))
    return AffineTransform.from_matrix(root)


class OracleTransformNet:
    """Transform predictor that returns an equal share of a known transform per stage."""

    def __init__(self, truth: AffineTransform, stages: int) -> None:
        self._increment = stage_root(truth, stages).as_array()

    def predict(self, w_prev: DiffTensor, target: DiffTensor) -> DiffTensor:
        return DiffTensor(self._increment)

    def parameters(self) -> dict[str, DiffTensor]:
        return {}


# ---------------------------------------------------------------------------
# Interpolation sharpness
# ---------------------------------------------------------------------------


def sequential_warp(
    source: NDArray[np.float64],
    increments: Sequence[AffineTransform],
    frame: CoordinateFrame,
) -> NDArray[np.float64]:
    """Resample once per increment instead of once with the composed transform.

    Increments are applied last-first so the sampled coordinates match a
    single warp with ``increments[-1] @ ... @ increments[0]``.
    """
    out = np.asarray(source, dtype=np.float64)
    for increment in reversed(increments):
        out = warp_values(out, increment, frame)
    return out


def mean_gradient_magnitude(volume: ArrayLike) -> float:
    """Mean Euclidean norm of the central-difference image gradient."""
    grads = np.gradient(np.asarray(volume, dtype=np.float64))
    return float(np.sqrt(sum(g * g for g in grads)).mean())
