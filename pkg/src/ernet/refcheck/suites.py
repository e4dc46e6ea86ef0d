"""Oracle equivalence, analytic-value and gradient suites.

Each suite returns :class:`SuiteResult` records; ``ernet verify`` renders
them and exits non-zero when any fails.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
from scipy import ndimage

from ernet.core.config import ModelConfig
from ernet.core.geometry import (
    AffineTransform,
    CoordinateFrame,
    compose,
    compose_params,
    map_point,
    warp,
    warp_values,
)
from ernet.core.models import Mode
from ernet.core.objective import count_components, dice_ext, mask_smoothness, ncc_loss
from ernet.core.pipeline import ErnetModel, forward
from ernet.refcheck.oracles import (
    bfs_components,
    fd_gradient,
    naive_conv,
    naive_dice,
    naive_map_point,
    naive_ncc,
    naive_smoothness,
    naive_warp,
)
from ernet.tensorcore import (
    DiffTensor,
    box_sum,
    conv3d,
    dense,
    elementwise,
    fresh_tape,
    global_average_pool,
    heaviside,
    no_grad,
    reduce,
    steep_sigmoid,
    upsample_nearest2x,
)

if TYPE_CHECKING:
    from collections.abc import Callable, Sequence

    from numpy.typing import NDArray

    OpBuilder = Callable[[Sequence[DiffTensor]], DiffTensor]
    OpCheck = tuple[str, OpBuilder, list[NDArray[np.float64]]]

logger = logging.getLogger(__name__)

EQUIVALENCE_TOLERANCE = 1e-10
OP_GRADIENT_TOLERANCE = 1e-5
MODEL_GRADIENT_TOLERANCE = 1e-3
DEFAULT_INSTANCES = 50
GRADIENT_EXTENT = 8
# Three registration levels keep 8-cubed inputs unpadded.
GRADIENT_EXTRACTION_WIDTHS = (2, 2, 2, 4, 4, 4, 2, 2, 2, 2)
GRADIENT_REGISTRATION_WIDTHS = (2, 4, 4)
GRADIENT_DENSE_WIDTH = 8


@dataclass(frozen=True)
class SuiteResult:
    """Outcome of one oracle check over one or more instances."""

    suite: str
    name: str
    cases: int
    max_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return math.isfinite(self.max_error) and self.max_error <= self.tolerance


def relative_error(actual: NDArray[np.float64], expected: NDArray[np.float64]) -> float:
    """Largest absolute difference scaled by the largest expected magnitude."""
    scale = max(float(np.max(np.abs(expected), initial=0.0)), 1e-8)
    return float(np.max(np.abs(actual - expected), initial=0.0)) / scale


def _random_params(rng: np.random.Generator, spread: float = 0.1) -> NDArray[np.float64]:
    return AffineTransform.identity().as_array() + rng.normal(0.0, spread, size=12)


def _random_extents(rng: np.random.Generator, low: int, high: int) -> tuple[int, int, int]:
    w, h, d = (int(n) for n in rng.integers(low, high + 1, size=3))
    return w, h, d


# ---------------------------------------------------------------------------
# Fast path versus nested loops
# ---------------------------------------------------------------------------


def _sweep(
    name: str, instances: int, case: Callable[[], float], tolerance: float
) -> SuiteResult:
    worst = max((case() for _ in range(instances)), default=0.0)
    return SuiteResult("equivalence", name, instances, worst, tolerance)


def equivalence_suite(
    seed: int = 0, instances: int = DEFAULT_INSTANCES
) -> list[SuiteResult]:
    """Compare every fast operation with its brute-force counterpart."""
    rng = np.random.default_rng(seed)

    def conv_case() -> float:
        c_in, c_out = (int(c) for c in rng.integers(1, 3, size=2))
        k = int(rng.choice([1, 3]))
        stride = int(rng.choice([1, 2]))
        x = rng.normal(size=(c_in, *_random_extents(rng, 2, 5)))
        kernel = rng.normal(size=(c_out, c_in, k, k, k))
        bias = rng.normal(size=c_out)
        with no_grad():
            fast = conv3d(
                DiffTensor(x), DiffTensor(kernel), DiffTensor(bias), stride=stride, padding=k // 2
            ).values
        slow = naive_conv(x, kernel, bias, stride=stride, padding=k // 2)
        return float(np.max(np.abs(fast - slow)))

    def warp_case() -> float:
        extents = _random_extents(rng, 2, 6)
        source = rng.uniform(size=extents)
        params = _random_params(rng)
        with no_grad():
            fast = warp(DiffTensor(source), DiffTensor(params), CoordinateFrame(extents)).values
        return float(np.max(np.abs(fast - naive_warp(source, params))))

    def ncc_case() -> float:
        extents = _random_extents(rng, 3, 6)
        window = int(rng.choice([3, 5]))
        a = rng.uniform(size=extents)
        b = rng.uniform(size=extents)
        with no_grad():
            fast = ncc_loss(DiffTensor(a), DiffTensor(b), window).item()
        return abs(fast - naive_ncc(a, b, window))

    def smoothness_case() -> float:
        mask = rng.uniform(size=_random_extents(rng, 2, 6))
        with no_grad():
            fast = mask_smoothness(DiffTensor(mask)).item()
        return abs(fast - naive_smoothness(mask))

    def dice_case() -> float:
        extents = _random_extents(rng, 2, 8)
        a = (rng.uniform(size=extents) < rng.uniform(0.0, 0.6)).astype(np.float64)
        b = (rng.uniform(size=extents) < rng.uniform(0.0, 0.6)).astype(np.float64)
        return abs(dice_ext(a, b) - naive_dice(a, b))

    def components_case() -> float:
        mask = rng.uniform(size=_random_extents(rng, 2, 8)) < 0.3
        return float(abs(count_components(mask) - bfs_components(mask)))

    def mapping_case() -> float:
        first = AffineTransform.from_array(rng.normal(size=12))
        second = AffineTransform.from_array(rng.normal(size=12))
        point = rng.normal(size=3)
        fast = map_point(compose(first, second), point)
        slow = naive_map_point(second.matrix(), naive_map_point(first.matrix(), point))
        return float(np.max(np.abs(fast - slow)))

    cases: list[tuple[str, Callable[[], float]]] = [
        ("conv3d", conv_case),
        ("warp", warp_case),
        ("ncc_loss", ncc_case),
        ("mask_smoothness", smoothness_case),
        ("dice", dice_case),
        ("count_components", components_case),
        ("compose/map_point", mapping_case),
    ]
    return [_sweep(name, instances, case, EQUIVALENCE_TOLERANCE) for name, case in cases]


# ---------------------------------------------------------------------------
# Hand-derived values
# ---------------------------------------------------------------------------


def analytic_suite(seed: int = 0) -> list[SuiteResult]:
    """Known closed-form values of the loss terms, metrics and activations."""
    rng = np.random.default_rng(seed)
    single = np.zeros((5, 5, 5))
    single[2, 2, 2] = 1.0
    volume = ndimage.gaussian_filter(rng.uniform(size=(8, 8, 8)), 0.5)
    box = np.zeros((6, 6, 6))
    box[1:3, 1:3, 1:3] = 1.0
    shifted = np.roll(box, 3, axis=0)
    other = ndimage.gaussian_filter(rng.uniform(size=(8, 8, 8)), 0.5)
    noise_a, noise_b = rng.uniform(size=(16, 16, 16)), rng.uniform(size=(16, 16, 16))
    soft = rng.uniform(size=(6, 6, 6))
    overlap = np.roll(box, 1, axis=1)

    def ncc(a: NDArray[np.float64], b: NDArray[np.float64], window: int = 9) -> float:
        return ncc_loss(DiffTensor(a), DiffTensor(b), window).item()

    def smoothness(mask: NDArray[np.float64]) -> float:
        return mask_smoothness(DiffTensor(mask)).item()

    with no_grad():
        checks: list[tuple[str, float, float, float]] = [
            ("single-voxel smoothness", mask_smoothness(DiffTensor(single)).item(), 6.0, 1e-12),
            (
                "constant-mask smoothness",
                mask_smoothness(DiffTensor(np.full((4, 4, 4), 0.7))).item(),
                0.0,
                1e-12,
            ),
            (
                "identical-volume NCC",
                ncc_loss(DiffTensor(volume), DiffTensor(volume)).item(),
                -1.0,
                1e-3,
            ),
            ("NCC symmetry", ncc(volume, other) - ncc(other, volume), 0.0, 1e-12),
            ("NCC of 2*target + 3", ncc(2.0 * volume + 3.0, volume), -1.0, 1e-3),
            # Midpoint and half-width of the open interval (-0.25, 0).
            ("NCC of independent noise", ncc(noise_a, noise_b), -0.125, 0.125),
            ("smoothness under complement", smoothness(soft) - smoothness(1.0 - soft), 0.0, 1e-9),
            (
                "smoothness under axis permutation",
                smoothness(soft) - smoothness(soft.transpose(2, 0, 1)),
                0.0,
                1e-9,
            ),
            ("Dice of equal masks", dice_ext(box, box), 1.0, 0.0),
            ("Dice symmetry", dice_ext(box, overlap) - dice_ext(overlap, box), 0.0, 0.0),
            ("Dice of disjoint masks", dice_ext(box, shifted), 0.0, 0.0),
            (
                "steep sigmoid at x=1, gamma=10",
                steep_sigmoid(DiffTensor(1.0), 10.0).item(),
                1.0 / (1.0 + math.exp(-10.0)),
                1e-12,
            ),
            ("heaviside at zero", float(heaviside(np.zeros(1))[0]), 0.0, 0.0),
            (
                "scale-by-2 maps (1,2,3) to (2,4,6)",
                float(
                    np.max(
                        np.abs(
                            map_point(
                                AffineTransform.from_matrix(np.diag([2.0, 2.0, 2.0, 1.0])),
                                (1.0, 2.0, 3.0),
                            )
                            - (2.0, 4.0, 6.0)
                        )
                    )
                ),
                0.0,
                1e-12,
            ),
        ]
    return [
        SuiteResult("analytic", name, 1, abs(actual - expected), tolerance)
        for name, actual, expected, tolerance in checks
    ]


# ---------------------------------------------------------------------------
# Autodiff versus finite differences
# ---------------------------------------------------------------------------


def _check_op(
    name: str,
    build: Callable[[Sequence[DiffTensor]], DiffTensor],
    arrays: Sequence[NDArray[np.float64]],
    rng: np.random.Generator,
) -> SuiteResult:
    """Compare gradients of ``sum(build(x) * r)`` for a random weighting ``r``."""
    with no_grad():
        weights = rng.normal(size=build([DiffTensor(a) for a in arrays]).shape)

    def scalar(tensors: Sequence[DiffTensor]) -> DiffTensor:
        return reduce(elementwise("mul", build(tensors), DiffTensor(weights)), "sum")

    with fresh_tape():
        tensors = [DiffTensor(a, requires_grad=True) for a in arrays]
        scalar(tensors).backward()
        autodiff = [np.zeros(t.shape) if t.grad is None else t.grad for t in tensors]

    worst = 0.0
    for i, array in enumerate(arrays):

        def loss_at(values: NDArray[np.float64], i: int = i) -> float:
            inputs = [DiffTensor(values if j == i else a) for j, a in enumerate(arrays)]
            with no_grad():
                return scalar(inputs).item()

        numeric = fd_gradient(loss_at, array, 1e-6)
        worst = max(worst, relative_error(autodiff[i], numeric))
    return SuiteResult("gradient", name, len(arrays), worst, OP_GRADIENT_TOLERANCE)


def op_gradient_suite(seed: int = 0) -> list[SuiteResult]:
    """Finite-difference checks for every differentiable primitive."""
    rng = np.random.default_rng(seed)
    frame = CoordinateFrame((4, 5, 3))
    normal = rng.normal

    checks: list[OpCheck] = [
        (
            "elementwise mul",
            lambda t: t[0] * t[1],
            [normal(size=(2, 3, 4)), normal(size=(2, 3, 4))],
        ),
        (
            "elementwise div",
            lambda t: t[0] / t[1],
            [normal(size=(3, 3)), rng.uniform(1.0, 2.0, size=(3, 3))],
        ),
        (
            "conv3d",
            lambda t: conv3d(t[0], t[1], t[2], stride=1, padding=1),
            [normal(size=(2, 3, 4, 3)), normal(size=(2, 2, 3, 3, 3)), normal(size=2)],
        ),
        (
            "conv3d stride 2",
            lambda t: conv3d(t[0], t[1], t[2], stride=2, padding=1),
            [normal(size=(1, 4, 4, 4)), normal(size=(2, 1, 3, 3, 3)), normal(size=2)],
        ),
        ("upsample_nearest2x", lambda t: upsample_nearest2x(t[0]), [normal(size=(2, 2, 2))]),
        (
            "dense",
            lambda t: dense(t[0], t[1], t[2]),
            [normal(size=4), normal(size=(3, 4)), normal(size=3)],
        ),
        ("steep_sigmoid", lambda t: steep_sigmoid(t[0], 10.0), [normal(0.0, 0.2, size=(3, 3, 3))]),
        ("reduce mean", lambda t: reduce(t[0], "mean"), [normal(size=(2, 2, 2))]),
        ("global_average_pool", lambda t: global_average_pool(t[0]), [normal(size=(2, 3, 2, 2))]),
        ("box_sum", lambda t: box_sum(t[0], 3), [normal(size=(4, 4, 4))]),
        (
            "compose_params",
            lambda t: compose_params(t[0], t[1]),
            [_random_params(rng), _random_params(rng)],
        ),
        (
            "warp",
            lambda t: warp(t[0], t[1], frame),
            [rng.uniform(size=frame.extents), _random_params(rng, 0.05)],
        ),
        (
            "ncc_loss",
            lambda t: ncc_loss(t[0], t[1], 3),
            [rng.uniform(size=(4, 4, 4)), rng.uniform(size=(4, 4, 4))],
        ),
        ("mask_smoothness", lambda t: mask_smoothness(t[0]), [rng.uniform(size=(3, 4, 3))]),
    ]
    return [_check_op(name, build, arrays, rng) for name, build, arrays in checks]


def tiny_pair(
    rng: np.random.Generator, extent: int = GRADIENT_EXTENT
) -> tuple[DiffTensor, DiffTensor]:
    """A smooth random volume and a slightly transformed copy of it."""
    frame = CoordinateFrame((extent, extent, extent))
    source = ndimage.gaussian_filter(rng.uniform(size=frame.extents), 1.0)
    source = (source - source.min()) / (source.max() - source.min())
    target = warp_values(source, AffineTransform.from_array(_random_params(rng, 0.03)), frame)
    return DiffTensor(source), DiffTensor(target)


def model_gradient_suite(
    seed: int = 0,
    *,
    entries_per_tensor: int | None = None,
    extent: int = GRADIENT_EXTENT,
) -> list[SuiteResult]:
    """Total-loss gradients of a narrow two-by-two stage model.

    Every entry of every parameter tensor is differentiated unless
    *entries_per_tensor* limits it to a random sample.  Biases and the
    registration head are jittered away from zero so that no activation or
    sampling coordinate sits exactly on a kink.
    """
    if entries_per_tensor is not None and entries_per_tensor < 1:
        msg = f"entries_per_tensor must be positive, got {entries_per_tensor}"
        raise ValueError(msg)
    rng = np.random.default_rng(seed)
    config = ModelConfig(
        stages_extraction=2,
        stages_registration=2,
        extraction_widths=GRADIENT_EXTRACTION_WIDTHS,
        registration_widths=GRADIENT_REGISTRATION_WIDTHS,
        dense_width=GRADIENT_DENSE_WIDTH,
    )
    model = ErnetModel(config, seed=seed)
    for name, p in model.parameters().items():
        if name.endswith(".bias") or name.startswith("reg.fc1"):
            p.values = p.values + rng.normal(0.0, 0.02, size=p.shape)
    source, target = tiny_pair(rng, extent)

    with fresh_tape():
        result = forward(model, source, target, Mode.train)
        assert result.loss is not None and result.loss.graph is not None
        result.loss.graph.backward()
    params = model.parameters()
    autodiff = {
        name: np.zeros(p.shape) if p.grad is None else p.grad.copy() for name, p in params.items()
    }

    results: list[SuiteResult] = []
    for name, p in params.items():
        original = p.values.copy()
        if entries_per_tensor is None or entries_per_tensor >= p.size:
            picks = list(range(p.size))
        else:
            picks = [int(i) for i in rng.choice(p.size, size=entries_per_tensor, replace=False)]

        def loss_at(values: NDArray[np.float64], p: DiffTensor = p) -> float:
            p.values = values
            with no_grad():
                loss = forward(model, source, target, Mode.train).loss
            assert loss is not None
            return loss.total

        numeric = fd_gradient(loss_at, original, 1e-5, indices=picks)
        p.values = original
        error = relative_error(autodiff[name].reshape(-1)[picks], numeric.reshape(-1)[picks])
        results.append(
            SuiteResult("model gradient", name, len(picks), error, MODEL_GRADIENT_TOLERANCE)
        )
        logger.debug("gradient check %s over %d entries: %.3e", name, len(picks), error)
    return results


def run_all(
    seed: int = 0,
    *,
    instances: int = DEFAULT_INSTANCES,
    include_model: bool = True,
) -> list[SuiteResult]:
    """Every suite in a fixed order."""
    results = [
        *equivalence_suite(seed, instances),
        *analytic_suite(seed),
        *op_gradient_suite(seed),
    ]
    if include_model:
        results += model_gradient_suite(seed)
    failed = sum(not r.passed for r in results)
    logger.info("%d check(s), %d failed", len(results), failed)
    return results
