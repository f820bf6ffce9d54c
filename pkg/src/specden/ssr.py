"""Spectral separation and low-rank reconstruction of decoder features.

A feature map is split into a pooled low-frequency part and the residual
high-frequency part; each part is enhanced by its own convolution. The
enhanced encoder (``x_up``) and decoder (``x_down``) features are stacked
into ``X_E``, a convolution maps ``X_E`` to ``k`` basis maps, and ``x_down``
is replaced by its orthogonal projection onto the span of those maps.

The projection ``P = V (V^T V + eps I)^{-1} V^T`` is never formed: with
``c = solve(V^T V + eps I, V^T x)`` the result is ``y = V c``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .layers import Conv2d, Module


@dataclass(frozen=True)
class SsrConfig:
    enabled: bool = False
    k: int = 8
    eps_rel: float = 1e-6
    placement: int = 1  # encoder/decoder level feeding x_up / x_down
    mode: Literal["replace", "residual"] = "replace"
    kernel: int = 3

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("ssr.k must be >= 1")
        if self.eps_rel <= 0:
            raise ValueError("ssr.eps_rel must be > 0")
        if self.mode not in ("replace", "residual"):
            raise ValueError("ssr.mode must be 'replace' or 'residual'")
        if self.placement < 1:
            raise ValueError("ssr.placement must be >= 1")


@dataclass
class FrequencySplit:
    f_low: Tensor
    f_high: Tensor


@dataclass
class LowRankBasis:
    V: Tensor  # (B, N, k)
    k: int
    eps_rel: float


def freq_split(f: Tensor) -> FrequencySplit:
    low = ad.avgpool2(f)
    return FrequencySplit(low, ad.sub(f, ad.bilinear_up2(low)))


class Enhancer(Module):
    """Separate convolutions for the low- and high-frequency parts of one feature."""

    def __init__(self, channels: int, kernel: int, rng: np.random.Generator, name: str):
        self.low = Conv2d(channels, channels, kernel, rng, f"{name}.low")
        self.high = Conv2d(channels, channels, kernel, rng, f"{name}.high")

    def __call__(self, x: Tensor) -> Tensor:
        split = freq_split(x)
        low = ad.bilinear_up2(self.low(split.f_low))
        return ad.concat_channels(low, self.high(split.f_high))


def build_basis_input(x_up: Tensor, x_down: Tensor, enh_up: Enhancer, enh_down: Enhancer) -> Tensor:
    if x_up.shape != x_down.shape:
        raise ad.ShapeError(f"SSR inputs differ in shape: {x_up.shape} vs {x_down.shape}")
    return ad.concat_channels(enh_up(x_up), enh_down(x_down))


def generate_basis(x_e: Tensor, generator: Conv2d, channels: int, eps_rel: float = 1e-6) -> LowRankBasis:
    """Basis columns from the generator's ``k`` output maps, tiled over ``channels``."""
    maps = generator(x_e)
    k = maps.shape[1]
    n = channels * maps.shape[2] * maps.shape[3]
    if k > n:
        raise ValueError(f"basis count k={k} exceeds vector length N={n}")
    return LowRankBasis(ad.tile_channels(maps, channels), k, eps_rel)


def project_reconstruct(V: Tensor, x: Tensor, eps: Optional[float] = None,
                        eps_rel: float = 1e-6, name: str = "ssr") -> Tensor:
    """Orthogonal projection of ``x`` onto ``span(V)`` with a regularised Gram solve.

    ``V`` is ``(N, k)`` or ``(B, N, k)``; ``x`` is ``(N,)`` or ``(B, N)``. With
    ``eps`` given it is used as an absolute ridge, otherwise
    ``eps = eps_rel * trace(V^T V) / k``.
    """
    batched = V.ndim == 3
    if not batched:
        V = ad.reshape(V, (1,) + V.shape)
        x = ad.reshape(x, (1,) + x.shape)
    if x.shape != V.shape[:2]:
        raise ad.ShapeError(f"project_reconstruct: x {x.shape} does not match V {V.shape}")
    vt = ad.transpose(V)
    gram = ad.matmul(vt, V)
    if eps is None:
        gram = ad.gram_regularize(gram, eps_rel)
    else:
        gram = ad.add(gram, Tensor(np.broadcast_to(eps * np.eye(V.shape[2]), gram.shape)))
    xc = ad.reshape(x, x.shape + (1,))
    coef = ad.solve_small(gram, ad.matmul(vt, xc), name=name)
    y = ad.reshape(ad.matmul(V, coef), x.shape)
    return y if batched else ad.reshape(y, y.shape[1:])


class SSRBlock(Module):
    def __init__(self, channels: int, cfg: SsrConfig, rng: np.random.Generator, name: str = "ssr"):
        self.cfg = cfg
        self.channels = channels
        self.name = name
        self.enh_up = Enhancer(channels, cfg.kernel, rng, f"{name}.enh_up")
        self.enh_down = Enhancer(channels, cfg.kernel, rng, f"{name}.enh_down")
        self.generator = Conv2d(4 * channels, cfg.k, cfg.kernel, rng, f"{name}.gen")

    def __call__(self, x_up: Tensor, x_down: Tensor) -> Tensor:
        x_e = build_basis_input(x_up, x_down, self.enh_up, self.enh_down)
        basis = generate_basis(x_e, self.generator, self.channels, self.cfg.eps_rel)
        nb = x_down.shape[0]
        flat = ad.reshape(x_down, (nb, -1))
        y = ad.reshape(project_reconstruct(basis.V, flat, eps_rel=self.cfg.eps_rel, name=self.name),
                       x_down.shape)
        return ad.add(x_down, y) if self.cfg.mode == "residual" else y
