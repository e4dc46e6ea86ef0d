"""Tests for ernet.core.geometry."""

from __future__ import annotations

from typing import TYPE_CHECKING

import numpy as np
import pytest

from ernet.core.geometry import (
    AffineTransform,
    Convention,
    CoordinateFrame,
    TransformFormatError,
    center_displacement,
    compose,
    compose_params,
    format_transform,
    from_voxel_matrix,
    invert,
    map_point,
    parse_transform,
    read_transform,
    to_voxel_matrix,
    warp,
    warp_labels,
    warp_values,
    write_transform,
)
from ernet.refcheck.oracles import fd_gradient, naive_warp
from ernet.tensorcore import DiffTensor, ShapeError, fresh_tape, reduce

if TYPE_CHECKING:
    from pathlib import Path

SCALE_2 = AffineTransform((2, 0, 0, 0, 0, 2, 0, 0, 0, 0, 2, 0))
SHIFT = AffineTransform((1, 0, 0, 0.5, 0, 1, 0, -0.25, 0, 0, 1, 0.125))


class TestAffineTransform:
    """Verify construction and accessors."""

    def test_default_is_identity(self) -> None:
        np.testing.assert_array_equal(AffineTransform().matrix(), np.eye(4))

    def test_wrong_parameter_count_raises(self) -> None:
        with pytest.raises(ValueError, match="12 parameters"):
            AffineTransform((1.0, 2.0))

    def test_matrix_last_row_is_exact(self) -> None:
        m = AffineTransform.from_array(np.random.default_rng(0).normal(size=12)).matrix()
        np.testing.assert_array_equal(m[3], [0.0, 0.0, 0.0, 1.0])

    def test_from_matrix_rejects_bad_shape(self) -> None:
        with pytest.raises(ValueError, match="4x4"):
            AffineTransform.from_matrix(np.eye(3))

    def test_translation(self) -> None:
        np.testing.assert_array_equal(SHIFT.translation, [0.5, -0.25, 0.125])


class TestTransformAlgebra:
    """Verify compose, invert and map_point."""

    def test_map_point_scale(self) -> None:
        np.testing.assert_allclose(map_point(SCALE_2, (1, 2, 3)), (2, 4, 6))

    def test_compose_with_identity(self) -> None:
        assert compose(SHIFT, AffineTransform.identity()) == SHIFT
        assert compose(AffineTransform.identity(), SHIFT) == SHIFT

    def test_compose_applies_inner_first(self) -> None:
        point = np.array([0.3, -0.2, 0.1])
        expected = map_point(SHIFT, map_point(SCALE_2, point))
        np.testing.assert_allclose(map_point(compose(SCALE_2, SHIFT), point), expected)

    def test_invert_round_trip(self) -> None:
        t = AffineTransform.from_matrix(
            np.vstack([np.eye(3, 4) + 0.1 * np.random.default_rng(1).normal(size=(3, 4)),
                       [0, 0, 0, 1]])
        )
        np.testing.assert_allclose(compose(t, invert(t)).matrix(), np.eye(4), atol=1e-12)

    def test_voxel_matrix_round_trip(self) -> None:
        frame = CoordinateFrame((9, 7, 5))
        back = from_voxel_matrix(to_voxel_matrix(SHIFT, frame), frame)
        np.testing.assert_allclose(back.as_array(), SHIFT.as_array(), atol=1e-12)

    def test_voxel_matrix_of_identity_is_identity(self) -> None:
        frame = CoordinateFrame((9, 7, 5))
        np.testing.assert_allclose(
            to_voxel_matrix(AffineTransform.identity(), frame), np.eye(4), atol=1e-12
        )

    def test_center_displacement_in_voxels(self) -> None:
        frame = CoordinateFrame((9, 9, 9))
        np.testing.assert_allclose(center_displacement(SHIFT, frame), [2.0, -1.0, 0.5])


class TestCoordinateFrame:
    """Verify the normalized-centered convention."""

    def test_extent_too_small_raises(self) -> None:
        with pytest.raises(ValueError, match="extents >= 2"):
            CoordinateFrame((1, 4, 4))

    def test_corners_map_to_plus_minus_one(self) -> None:
        frame = CoordinateFrame((5, 3, 9))
        grid = frame.normalized_grid()
        np.testing.assert_allclose(grid[:3, 0], [-1, -1, -1])
        np.testing.assert_allclose(grid[:3, -1], [1, 1, 1])

    def test_normalization_inverts_denormalization(self) -> None:
        frame = CoordinateFrame((5, 3, 9))
        np.testing.assert_allclose(
            frame.normalization_matrix() @ frame.denormalization_matrix(), np.eye(4)
        )


class TestWarp:
    """Verify the spatial transformation layer."""

    def test_identity_is_exact(self) -> None:
        source = np.random.default_rng(0).normal(size=(6, 5, 4))
        out = warp_values(source, AffineTransform.identity(), CoordinateFrame((6, 5, 4)))
        np.testing.assert_array_equal(out, source)

    def test_matches_naive(self) -> None:
        rng = np.random.default_rng(2)
        source = rng.normal(size=(5, 6, 4))
        params = np.array(AffineTransform.identity().params) + rng.normal(0, 0.1, 12)
        fast = warp_values(source, AffineTransform.from_array(params), CoordinateFrame((5, 6, 4)))
        np.testing.assert_allclose(fast, naive_warp(source, params), atol=1e-10)

    def test_out_of_bounds_is_zero(self) -> None:
        far = AffineTransform((1, 0, 0, 10, 0, 1, 0, 0, 0, 0, 1, 0))
        out = warp_values(np.ones((4, 4, 4)), far, CoordinateFrame((4, 4, 4)))
        np.testing.assert_array_equal(out, 0.0)

    def test_gradient_wrt_params(self) -> None:
        rng = np.random.default_rng(3)
        frame = CoordinateFrame((5, 5, 5))
        source = DiffTensor(rng.normal(size=frame.extents))
        weights = DiffTensor(rng.normal(size=frame.extents))
        p0 = np.array(AffineTransform.identity().params) + rng.normal(0, 0.05, 12)

        def loss(p: np.ndarray) -> float:
            return float((warp(source, DiffTensor(p), frame).values * weights.values).sum())

        with fresh_tape():
            params = DiffTensor(p0, requires_grad=True)
            reduce(warp(source, params, frame) * weights).backward()
        np.testing.assert_allclose(params.grad, fd_gradient(loss, p0, h=1e-6), rtol=1e-4, atol=1e-6)

    def test_gradient_wrt_source(self) -> None:
        rng = np.random.default_rng(4)
        frame = CoordinateFrame((4, 4, 4))
        params = DiffTensor(np.array(AffineTransform.identity().params) + rng.normal(0, 0.05, 12))
        weights = rng.normal(size=frame.extents)
        s0 = rng.normal(size=frame.extents)

        def loss(s: np.ndarray) -> float:
            return float((warp(DiffTensor(s), params, frame).values * weights).sum())

        with fresh_tape():
            source = DiffTensor(s0, requires_grad=True)
            reduce(warp(source, params, frame) * DiffTensor(weights)).backward()
        np.testing.assert_allclose(source.grad, fd_gradient(loss, s0), atol=1e-6)

    def test_shape_mismatch_raises(self) -> None:
        with pytest.raises(ShapeError, match="frame"):
            warp(DiffTensor(np.zeros((4, 4, 4))), AffineTransform().as_tensor(),
                 CoordinateFrame((5, 4, 4)))

    def test_labels_stay_integral(self) -> None:
        labels = np.random.default_rng(5).integers(0, 4, size=(6, 6, 6))
        out = warp_labels(labels, SHIFT, CoordinateFrame((6, 6, 6)))
        assert out.dtype == np.int64
        assert set(np.unique(out)) <= {0, 1, 2, 3}

    def test_labels_identity(self) -> None:
        labels = np.random.default_rng(6).integers(0, 4, size=(5, 5, 5))
        out = warp_labels(labels, AffineTransform.identity(), CoordinateFrame((5, 5, 5)))
        np.testing.assert_array_equal(out, labels)


class TestComposeParams:
    """Verify the differentiable composition layer."""

    def test_matches_matrix_product(self) -> None:
        out = compose_params(SCALE_2.as_tensor(), SHIFT.as_tensor())
        np.testing.assert_allclose(out.values, compose(SCALE_2, SHIFT).as_array())

    def test_gradients(self) -> None:
        rng = np.random.default_rng(7)
        a0, b0 = rng.normal(size=12), rng.normal(size=12)
        r = rng.normal(size=12)

        def loss(a: np.ndarray) -> float:
            return float((compose_params(DiffTensor(a), DiffTensor(b0)).values * r).sum())

        with fresh_tape():
            a = DiffTensor(a0, requires_grad=True)
            reduce(compose_params(a, DiffTensor(b0)) * DiffTensor(r)).backward()
        np.testing.assert_allclose(a.grad, fd_gradient(loss, a0), atol=1e-6)

    def test_rejects_wrong_shape(self) -> None:
        with pytest.raises(ShapeError, match="12-vectors"):
            compose_params(DiffTensor(np.zeros(9)), DiffTensor(np.zeros(12)))


class TestTransformText:
    """Verify the transform text format."""

    @pytest.mark.parametrize("convention", list(Convention))
    def test_round_trip_is_exact(self, tmp_path: Path, convention: Convention) -> None:
        frame = CoordinateFrame((8, 8, 8))
        path = tmp_path / "t.txt"
        write_transform(path, SHIFT, frame, convention)
        back = read_transform(path, frame)
        np.testing.assert_allclose(back.as_array(), SHIFT.as_array(), atol=1e-14)

    def test_normalized_text_has_header(self) -> None:
        text = format_transform(SHIFT, CoordinateFrame((4, 4, 4)))
        assert text.splitlines()[0].endswith("normalized-centered")

    def test_missing_header(self) -> None:
        with pytest.raises(TransformFormatError, match="header"):
            parse_transform("1 0 0 0 0 1 0 0 0 0 1 0", CoordinateFrame((4, 4, 4)))

    def test_unknown_convention(self) -> None:
        with pytest.raises(TransformFormatError, match="convention"):
            parse_transform("# ernet affine; convention: lps\n1 0 0", CoordinateFrame((4, 4, 4)))

    def test_wrong_value_count(self) -> None:
        text = "# ernet affine; convention: voxel\n1 2 3"
        with pytest.raises(TransformFormatError, match="12 values"):
            parse_transform(text, CoordinateFrame((4, 4, 4)))
