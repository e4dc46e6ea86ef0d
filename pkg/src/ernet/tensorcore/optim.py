"""Adam optimizer over named DiffTensor parameters."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from collections.abc import Mapping

    from numpy.typing import NDArray

    from ernet.tensorcore.tensor import DiffTensor


class MissingGradientError(RuntimeError):
    """Raised when a parameter reaches the optimizer without a gradient."""


@dataclass
class AdamState:
    """First/second moment estimates and the step counter."""

    step: int = 0
    first_moment: dict[str, NDArray[np.float64]] = field(default_factory=dict)
    second_moment: dict[str, NDArray[np.float64]] = field(default_factory=dict)


class Adam:
    """Adam with bias correction (Kingma & Ba).

    Parameters are addressed by name so the state can be checkpointed next to
    them and restored in a fresh process.
    """

    def __init__(
        self,
        params: Mapping[str, DiffTensor],
        *,
        lr: float = 1e-6,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        state: AdamState | None = None,
    ) -> None:
        self._params = dict(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.state = state or AdamState()
        for name, p in self._params.items():
            self.state.first_moment.setdefault(name, np.zeros(p.shape))
            self.state.second_moment.setdefault(name, np.zeros(p.shape))
            if self.state.first_moment[name].shape != p.shape:
                msg = (
                    f"Optimizer state for '{name}' has shape "
                    f"{self.state.first_moment[name].shape}, parameter has {p.shape}"
                )
                raise ValueError(msg)

    def zero_grad(self) -> None:
        for p in self._params.values():
            p.zero_grad()

    def step(self) -> None:
        """Apply one update to every parameter.

        Raises:
            MissingGradientError: If any parameter has no gradient.
        """
        missing = [name for name, p in self._params.items() if p.grad is None]
        if missing:
            msg = f"No gradient for parameter(s): {', '.join(sorted(missing))}"
            raise MissingGradientError(msg)

        state = self.state
        state.step += 1
        t = state.step
        correction1 = 1.0 - self.beta1**t
        correction2 = 1.0 - self.beta2**t

        for name, p in self._params.items():
            grad = p.grad
            assert grad is not None
            m = self.beta1 * state.first_moment[name] + (1.0 - self.beta1) * grad
            v = self.beta2 * state.second_moment[name] + (1.0 - self.beta2) * grad * grad
            state.first_moment[name] = m
            state.second_moment[name] = v
            m_hat = m / correction1
            v_hat = v / correction2
            # Parameters are replaced, never written in place.
            p.values = p.values - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
