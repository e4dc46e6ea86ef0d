"""Tests for ernet.tensorcore.tensor."""

from __future__ import annotations

import numpy as np
import pytest

from ernet.tensorcore import DiffTensor, ShapeError, current_tape, fresh_tape, no_grad, reduce


class TestDiffTensor:
    """Verify construction and accessors."""

    def test_values_are_float64(self) -> None:
        t = DiffTensor([1, 2, 3])
        assert t.values.dtype == np.float64

    def test_shape_ndim_size(self) -> None:
        t = DiffTensor(np.zeros((2, 3, 4)))
        assert t.shape == (2, 3, 4)
        assert t.ndim == 3
        assert t.size == 24

    def test_grad_starts_none(self) -> None:
        assert DiffTensor(1.0, requires_grad=True).grad is None

    def test_item_of_scalar(self) -> None:
        assert DiffTensor(2.5).item() == 2.5

    def test_item_of_vector_raises(self) -> None:
        with pytest.raises(ShapeError, match="one-element"):
            DiffTensor([1.0, 2.0]).item()

    def test_numpy_view_is_read_only(self) -> None:
        view = DiffTensor([1.0, 2.0]).numpy()
        with pytest.raises(ValueError, match="read-only"):
            view[0] = 5.0

    def test_detach_drops_requires_grad(self) -> None:
        t = DiffTensor([1.0], requires_grad=True, name="w")
        d = t.detach()
        assert not d.requires_grad
        assert d.name == "w"

    def test_repr_includes_name(self) -> None:
        assert "name='w'" in repr(DiffTensor([1.0], name="w"))


class TestTape:
    """Verify recording and reverse replay."""

    def test_records_only_when_grad_required(self) -> None:
        with fresh_tape() as tape:
            _ = DiffTensor([1.0]) + DiffTensor([2.0])
            assert len(tape) == 0
            _ = DiffTensor([1.0], requires_grad=True) + 1.0
            assert len(tape) == 1

    def test_no_grad_disables_recording(self) -> None:
        with fresh_tape() as tape, no_grad():
            out = DiffTensor([1.0], requires_grad=True) * 3.0
            assert len(tape) == 0
            assert not out.requires_grad

    def test_no_grad_restores_state(self) -> None:
        with no_grad():
            pass
        assert current_tape().enabled

    def test_backward_needs_scalar_root(self) -> None:
        with fresh_tape():
            x = DiffTensor([1.0, 2.0], requires_grad=True)
            with pytest.raises(ShapeError, match="scalar root"):
                (x * 2.0).backward()

    def test_product_rule(self) -> None:
        with fresh_tape():
            x = DiffTensor([2.0, 3.0], requires_grad=True)
            reduce(x * x).backward()
        np.testing.assert_allclose(x.grad, [4.0, 6.0])

    def test_shared_input_accumulates(self) -> None:
        with fresh_tape():
            x = DiffTensor([1.0, -2.0], requires_grad=True)
            y = x * 3.0
            reduce(y + y).backward()
        np.testing.assert_allclose(x.grad, [6.0, 6.0])

    def test_constant_inputs_get_no_grad(self) -> None:
        with fresh_tape():
            x = DiffTensor([1.0], requires_grad=True)
            c = DiffTensor([5.0])
            reduce(x * c).backward()
        assert c.grad is None
        np.testing.assert_allclose(x.grad, [5.0])

    def test_second_backward_accumulates(self) -> None:
        x = DiffTensor([1.0], requires_grad=True)
        for _ in range(2):
            with fresh_tape():
                reduce(x * 2.0).backward()
        np.testing.assert_allclose(x.grad, [4.0])

    def test_fresh_tape_clears_on_exit(self) -> None:
        with fresh_tape():
            _ = DiffTensor([1.0], requires_grad=True) + 1.0
        assert len(current_tape()) == 0
