"""Fully connected layers built on :mod:`pinda.autodiff`."""

from __future__ import annotations

from typing import Iterator, Sequence

import numpy as np

from pinda.autodiff import DimensionError, Tensor, matmul, relu


class Linear:
    def __init__(self, fan_in: int, fan_out: int, rng: np.random.Generator, zero: bool = False):
        # Kaiming-uniform for ReLU networks, fan-in mode
        if zero:
            w = np.zeros((fan_in, fan_out))
            b = np.zeros(fan_out)
        else:
            bound = np.sqrt(6.0 / fan_in)
            w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
            b = rng.uniform(-1.0 / np.sqrt(fan_in), 1.0 / np.sqrt(fan_in), size=fan_out)
        self.weight = Tensor(w, requires_grad=True)
        self.bias = Tensor(b, requires_grad=True)

    @property
    def fan_in(self) -> int:
        return self.weight.shape[0]

    @property
    def fan_out(self) -> int:
        return self.weight.shape[1]

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.fan_in:
            raise DimensionError(f"layer expects width {self.fan_in}, got {x.shape[-1]}")
        return matmul(x, self.weight) + self.bias

    def named_parameters(self, prefix: str) -> Iterator[tuple[str, Tensor]]:
        yield f"{prefix}.weight", self.weight
        yield f"{prefix}.bias", self.bias


class MLP:
    """Stack of linear layers with ReLU between them (none after the last)."""

    def __init__(self, widths: Sequence[int], rng: np.random.Generator):
        if len(widths) < 2:
            raise ValueError("an MLP needs at least input and output widths")
        self.widths = list(widths)
        self.layers = [Linear(a, b, rng) for a, b in zip(widths[:-1], widths[1:])]

    def __call__(self, x: Tensor) -> Tensor:
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = relu(x)
        return x

    def named_parameters(self, prefix: str) -> Iterator[tuple[str, Tensor]]:
        for i, layer in enumerate(self.layers):
            yield from layer.named_parameters(f"{prefix}.{i}")


def parameters(module) -> list[Tensor]:
    return [p for _, p in module.named_parameters()]
