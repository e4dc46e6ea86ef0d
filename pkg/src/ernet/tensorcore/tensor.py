"""DiffTensor and the computation tape used for reverse-mode differentiation.

Every primitive in :mod:`ernet.tensorcore.ops` records one :class:`TapeEntry`
on the active :class:`Tape` when any of its inputs requires a gradient.
Replaying the tape in reverse from a scalar root accumulates gradients into
``DiffTensor.grad``.  The tape is per thread; ``Tape.clear()`` is called
between optimization steps.
"""

from __future__ import annotations

import threading
from collections.abc import Callable, Iterator, Sequence
from contextlib import contextmanager
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from numpy.typing import ArrayLike, NDArray

BackwardFn = Callable[["NDArray[np.float64]"], Sequence["NDArray[np.float64] | None"]]


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


class DiffTensor:
    """Dense float64 array that can take part in reverse-mode differentiation.

    Values are treated as immutable once created.  ``grad`` is ``None`` until a
    backward pass reaches the tensor.
    """

    __slots__ = ("__weakref__", "grad", "name", "requires_grad", "values")

    def __init__(
        self,
        values: ArrayLike,
        *,
        requires_grad: bool = False,
        name: str | None = None,
    ) -> None:
        self.values: NDArray[np.float64] = np.array(values, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: NDArray[np.float64] | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.values.shape)

    @property
    def ndim(self) -> int:
        return int(self.values.ndim)

    @property
    def size(self) -> int:
        return int(self.values.size)

    def item(self) -> float:
        """Return the value of a one-element tensor as a Python float."""
        if self.values.size != 1:
            msg = f"item() requires a one-element tensor, got shape {self.shape}"
            raise ShapeError(msg)
        return float(self.values.reshape(-1)[0])

    def numpy(self) -> NDArray[np.float64]:
        """Return a read-only view of the values."""
        view = self.values.view()
        view.flags.writeable = False
        return view

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        """Backpropagate from this scalar tensor through the active tape."""
        current_tape().backward(self)

    def detach(self) -> DiffTensor:
        return DiffTensor(self.values, name=self.name)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"DiffTensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"

    # Operator sugar; implementations live in ops to keep one code path per primitive.

    def __add__(self, other: DiffTensor | float) -> DiffTensor:
        from ernet.tensorcore.ops import elementwise

        return elementwise("add", self, other)

    def __sub__(self, other: DiffTensor | float) -> DiffTensor:
        from ernet.tensorcore.ops import elementwise

        return elementwise("sub", self, other)

    def __mul__(self, other: DiffTensor | float) -> DiffTensor:
        from ernet.tensorcore.ops import elementwise

        return elementwise("mul", self, other)

    def __truediv__(self, other: DiffTensor | float) -> DiffTensor:
        from ernet.tensorcore.ops import elementwise

        return elementwise("div", self, other)

    def __neg__(self) -> DiffTensor:
        from ernet.tensorcore.ops import elementwise

        return elementwise("mul", self, -1.0)

    def __getitem__(self, index: tuple[slice | int, ...] | slice | int) -> DiffTensor:
        from ernet.tensorcore.ops import take_slice

        return take_slice(self, index)


@dataclass(frozen=True)
class TapeEntry:
    """One recorded primitive: its output, inputs and vector-Jacobian product."""

    op: str
    output: DiffTensor
    inputs: tuple[DiffTensor, ...]
    backward: BackwardFn


class Tape:
    """Ordered record of primitive operations.

    Recording order is a topological order of the graph, so reverse replay
    sees every consumer of a tensor before the op that produced it.
    """

    def __init__(self) -> None:
        self._entries: list[TapeEntry] = []
        self._enabled = True

    def __len__(self) -> int:
        return len(self._entries)

    @property
    def enabled(self) -> bool:
        return self._enabled

    @property
    def entries(self) -> tuple[TapeEntry, ...]:
        return tuple(self._entries)

    def record(self, entry: TapeEntry) -> None:
        self._entries.append(entry)

    def clear(self) -> None:
        self._entries.clear()

    def backward(self, root: DiffTensor) -> None:
        """Populate ``grad`` on every requires_grad tensor reachable from *root*.

        Raises:
            ShapeError: If *root* is not a one-element tensor.
        """
        if root.size != 1:
            msg = f"backward() needs a scalar root, got shape {root.shape}"
            raise ShapeError(msg)
        if not root.requires_grad:
            return

        pending: dict[int, NDArray[np.float64]] = {id(root): np.ones_like(root.values)}
        holders: dict[int, DiffTensor] = {id(root): root}

        for entry in reversed(self._entries):
            key = id(entry.output)
            upstream = pending.pop(key, None)
            if upstream is None:
                continue
            _accumulate(entry.output, upstream)
            for tensor, grad in zip(entry.inputs, entry.backward(upstream), strict=True):
                if grad is None or not tensor.requires_grad:
                    continue
                tkey = id(tensor)
                holders[tkey] = tensor
                if tkey in pending:
                    pending[tkey] = pending[tkey] + grad
                else:
                    pending[tkey] = grad

        # Whatever is still pending belongs to leaves (parameters and inputs).
        for key, grad in pending.items():
            _accumulate(holders[key], grad)


def _accumulate(tensor: DiffTensor, grad: NDArray[np.float64]) -> None:
    grad = np.asarray(grad, dtype=np.float64).reshape(tensor.shape)
    tensor.grad = grad.copy() if tensor.grad is None else tensor.grad + grad


_state = threading.local()


def current_tape() -> Tape:
    """Return this thread's active tape, creating it on first use."""
    tape: Tape | None = getattr(_state, "tape", None)
    if tape is None:
        tape = Tape()
        _state.tape = tape
    return tape


@contextmanager
def no_grad() -> Iterator[None]:
    """Disable recording on this thread's tape (inference, oracles, metrics)."""
    tape = current_tape()
    previous = tape._enabled
    tape._enabled = False
    try:
        yield
    finally:
        tape._enabled = previous


@contextmanager
def fresh_tape() -> Iterator[Tape]:
    """Run a block on a clean tape and clear it afterwards."""
    tape = current_tape()
    tape.clear()
    try:
        yield tape
    finally:
        tape.clear()


def make_result(
    op: str,
    values: NDArray[np.float64],
    inputs: Sequence[DiffTensor],
    backward: BackwardFn,
) -> DiffTensor:
    """Wrap *values* as the output of primitive *op*, recording it if needed."""
    tape = current_tape()
    needs_grad = tape.enabled and any(t.requires_grad for t in inputs)
    out = DiffTensor(values, requires_grad=needs_grad)
    if needs_grad:
        tape.record(TapeEntry(op=op, output=out, inputs=tuple(inputs), backward=backward))
    return out


def as_tensor(value: DiffTensor | ArrayLike) -> DiffTensor:
    """Coerce numbers and arrays to constant tensors."""
    if isinstance(value, DiffTensor):
        return value
    return DiffTensor(value)
