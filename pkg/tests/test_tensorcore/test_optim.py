"""Tests for ernet.tensorcore.optim and checkpoint."""

from __future__ import annotations

from typing import TYPE_CHECKING

import numpy as np
import pytest

from ernet.tensorcore import (
    Adam,
    AdamState,
    CheckpointError,
    DiffTensor,
    MissingGradientError,
    fresh_tape,
    load_checkpoint,
    reduce,
    save_checkpoint,
)

if TYPE_CHECKING:
    from pathlib import Path


class TestAdam:
    """Verify updates, bias correction and error paths."""

    def test_first_step_moves_by_learning_rate(self) -> None:
        p = DiffTensor([1.0, -1.0], requires_grad=True)
        opt = Adam({"p": p}, lr=0.1)
        p.grad = np.array([2.0, -0.5])
        opt.step()
        # Bias-corrected first step is lr * sign(grad).
        np.testing.assert_allclose(p.values, [0.9, -0.9], atol=1e-6)
        assert opt.state.step == 1

    def test_minimizes_quadratic(self) -> None:
        p = DiffTensor([3.0], requires_grad=True)
        opt = Adam({"p": p}, lr=0.1)
        for _ in range(300):
            opt.zero_grad()
            with fresh_tape():
                reduce(p * p).backward()
            opt.step()
        assert abs(p.values[0]) < 0.05

    def test_missing_gradient_raises(self) -> None:
        opt = Adam({"a": DiffTensor([1.0], requires_grad=True)})
        with pytest.raises(MissingGradientError, match="parameter"):
            opt.step()

    def test_state_shape_mismatch_raises(self) -> None:
        state = AdamState(first_moment={"p": np.zeros(3)}, second_moment={"p": np.zeros(3)})
        with pytest.raises(ValueError, match="shape"):
            Adam({"p": DiffTensor([1.0], requires_grad=True)}, state=state)

    def test_resumed_state_continues(self) -> None:
        p = DiffTensor([1.0], requires_grad=True)
        opt = Adam({"p": p}, lr=0.01)
        p.grad = np.array([1.0])
        opt.step()
        q = DiffTensor(p.values.copy(), requires_grad=True)
        resumed = Adam({"q": q}, lr=0.01, state=AdamState(
            step=opt.state.step,
            first_moment={"q": opt.state.first_moment["p"]},
            second_moment={"q": opt.state.second_moment["p"]},
        ))
        p.grad = np.array([1.0])
        q.grad = np.array([1.0])
        opt.step()
        resumed.step()
        np.testing.assert_array_equal(p.values, q.values)


class TestCheckpoint:
    """Verify the ERN1 container."""

    def test_float64_round_trip_is_exact(self, tmp_path: Path) -> None:
        arrays = {"w": np.random.default_rng(0).normal(size=(2, 3)), "b": np.array([np.pi])}
        path = tmp_path / "m.ern"
        save_checkpoint(path, arrays, meta={"stages": [1, 2]})
        loaded, meta = load_checkpoint(path)
        assert list(loaded) == ["w", "b"]
        np.testing.assert_array_equal(loaded["w"], arrays["w"])
        assert meta == {"stages": [1, 2]}

    def test_float32_export(self, tmp_path: Path) -> None:
        path = tmp_path / "m.ern"
        save_checkpoint(path, {"w": np.array([1.0 / 3.0])}, dtype="float32")
        loaded, _ = load_checkpoint(path)
        assert loaded["w"][0] == pytest.approx(1.0 / 3.0, rel=1e-6)

    def test_unsupported_dtype(self, tmp_path: Path) -> None:
        with pytest.raises(CheckpointError, match="dtype"):
            save_checkpoint(tmp_path / "m.ern", {}, dtype="int8")

    def test_missing_file(self, tmp_path: Path) -> None:
        with pytest.raises(CheckpointError, match="not found"):
            load_checkpoint(tmp_path / "absent.ern")

    def test_bad_magic(self, tmp_path: Path) -> None:
        path = tmp_path / "m.ern"
        path.write_bytes(b"NOPE" + b"\x00" * 16)
        with pytest.raises(CheckpointError, match="magic"):
            load_checkpoint(path)

    def test_truncated_payload(self, tmp_path: Path) -> None:
        path = tmp_path / "m.ern"
        save_checkpoint(path, {"w": np.zeros(10)})
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(CheckpointError, match="truncated"):
            load_checkpoint(path)
