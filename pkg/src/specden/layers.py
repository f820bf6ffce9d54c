"""Parameter containers: a tiny module system over :mod:`specden.autodiff`."""
from __future__ import annotations

import math
from typing import Iterator

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


class Module:
    """Anything holding parameters, directly or in child modules."""

    def named_parameters(self) -> Iterator[tuple[str, Tensor]]:
        for child in self._children():
            yield from child.named_parameters()

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def conv_layers(self) -> list["Conv2d"]:
        out = []
        for child in self._children():
            out.extend(child.conv_layers())
        return out

    def _children(self) -> list["Module"]:
        kids = []
        for value in vars(self).values():
            if isinstance(value, Module):
                kids.append(value)
            elif isinstance(value, (list, tuple)):
                kids.extend(v for v in value if isinstance(v, Module))
        return kids

    def num_parameters(self) -> int:
        return sum(p.data.size for p in self.parameters())

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None


class Conv2d(Module):
    """Same-size convolution with He-normal weights and zero bias."""

    def __init__(self, cin: int, cout: int, kernel: int, rng: np.random.Generator, name: str,
                 zero: bool = False):
        self.name = name
        shape = (cout, cin, kernel, kernel)
        if zero:
            w = np.zeros(shape)
        else:
            w = rng.standard_normal(shape) * math.sqrt(2.0 / (cin * kernel * kernel))
        self.weight = Tensor(w, requires_grad=True, name=f"{name}.weight")
        self.bias = Tensor(np.zeros(cout), requires_grad=True, name=f"{name}.bias")

    def __call__(self, x: Tensor) -> Tensor:
        return ad.conv2d(x, self.weight, self.bias)

    def named_parameters(self):
        yield self.weight.name, self.weight
        yield self.bias.name, self.bias

    def conv_layers(self):
        return [self]
