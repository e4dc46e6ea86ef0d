"""Parameterized layers shared by the extraction and registration networks."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from ernet.tensorcore import DiffTensor, conv3d, dense, leaky_relu

if TYPE_CHECKING:
    from collections.abc import Iterator


@dataclass
class ConvLayer:
    """3D convolution with a bias and an optional leaky activation."""

    name: str
    weight: DiffTensor
    bias: DiffTensor
    stride: int = 1
    leak: float | None = 0.2

    @classmethod
    def create(
        cls,
        name: str,
        c_in: int,
        c_out: int,
        rng: np.random.Generator,
        *,
        kernel: int = 3,
        stride: int = 1,
        leak: float | None = 0.2,
        gain: float = 1.0,
        bias: float = 0.0,
    ) -> ConvLayer:
        """He-normal initialized layer; *gain* scales the weights."""
        fan_in = c_in * kernel**3
        std = gain * math.sqrt(2.0 / fan_in)
        shape = (c_out, c_in, kernel, kernel, kernel)
        return cls(
            name=name,
            weight=DiffTensor(
                rng.normal(0.0, std, size=shape), requires_grad=True, name=f"{name}.weight"
            ),
            bias=DiffTensor(np.full(c_out, bias), requires_grad=True, name=f"{name}.bias"),
            stride=stride,
            leak=leak,
        )

    def __call__(self, x: DiffTensor) -> DiffTensor:
        k = self.weight.shape[-1]
        out = conv3d(x, self.weight, self.bias, stride=self.stride, padding=k // 2)
        return out if self.leak is None else leaky_relu(out, self.leak)

    def parameters(self) -> Iterator[tuple[str, DiffTensor]]:
        yield f"{self.name}.weight", self.weight
        yield f"{self.name}.bias", self.bias


@dataclass
class DenseLayer:
    """Fully connected layer ``leaky(W x + b)``."""

    name: str
    weight: DiffTensor
    bias: DiffTensor
    leak: float | None = 0.2

    @classmethod
    def create(
        cls,
        name: str,
        n_in: int,
        n_out: int,
        rng: np.random.Generator,
        *,
        leak: float | None = 0.2,
        zero: bool = False,
    ) -> DenseLayer:
        """He-normal weights, or all zeros when *zero* is set."""
        if zero:
            weight = np.zeros((n_out, n_in))
        else:
            weight = rng.normal(0.0, math.sqrt(2.0 / n_in), size=(n_out, n_in))
        return cls(
            name=name,
            weight=DiffTensor(weight, requires_grad=True, name=f"{name}.weight"),
            bias=DiffTensor(np.zeros(n_out), requires_grad=True, name=f"{name}.bias"),
            leak=leak,
        )

    def __call__(self, x: DiffTensor) -> DiffTensor:
        out = dense(x, self.weight, self.bias)
        return out if self.leak is None else leaky_relu(out, self.leak)

    def parameters(self) -> Iterator[tuple[str, DiffTensor]]:
        yield f"{self.name}.weight", self.weight
        yield f"{self.name}.bias", self.bias
