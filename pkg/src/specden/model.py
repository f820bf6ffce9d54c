"""Small U-Net with an optional SSR block between matching encoder/decoder levels."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .layers import Conv2d, Module
from .noise import derive_seed
from .noise import rng as make_rng
from .spectrum import DEFAULT_CUTOFF, R_MAX
from .ssr import SSRBlock, SsrConfig


@dataclass(frozen=True)
class LipschitzConfig:
    enabled: bool = False
    beta: float = 1.0
    iters: int = 1  # power iterations per training step
    verify_iters: int = 50  # end-of-epoch re-estimate and projection

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError("lipschitz.beta must be > 0")
        if self.iters < 1 or self.verify_iters < 1:
            raise ValueError("lipschitz iteration counts must be >= 1")


@dataclass(frozen=True)
class FsdConfig:
    enabled: bool = False
    cutoff: float = DEFAULT_CUTOFF

    def __post_init__(self):
        if not 0.0 < self.cutoff <= R_MAX:
            raise ValueError("fsd.cutoff must lie in (0, sqrt(2)/2]")


@dataclass(frozen=True)
class ModelConfig:
    in_channels: int = 1
    channels: tuple[int, ...] = (16, 32)
    bottleneck: int = 64
    kernel: int = 3
    ssr: SsrConfig = field(default_factory=SsrConfig)
    lipschitz: LipschitzConfig = field(default_factory=LipschitzConfig)
    fsd: FsdConfig = field(default_factory=FsdConfig)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(int(c) for c in self.channels))
        if not self.channels or min(self.channels) < 1 or self.bottleneck < 1:
            raise ValueError("channel counts must be positive")
        if self.kernel % 2 == 0:
            raise ValueError("kernel size must be odd")

    @property
    def levels(self) -> int:
        return len(self.channels)

    @property
    def multiple(self) -> int:
        return 2 ** self.levels


class DoubleConv(Module):
    def __init__(self, cin: int, cout: int, kernel: int, rng, name: str):
        self.c1 = Conv2d(cin, cout, kernel, rng, f"{name}.c1")
        self.c2 = Conv2d(cout, cout, kernel, rng, f"{name}.c2")

    def __call__(self, x: Tensor) -> Tensor:
        return ad.relu(self.c2(ad.relu(self.c1(x))))


class UNet(Module):
    """Encoder (double conv + avg-pool per level), bottleneck, decoder
    (bilinear up, skip concat, double conv) and a 1x1 output conv."""

    def __init__(self, cfg: ModelConfig):
        self.cfg = cfg
        g = make_rng(cfg.seed)
        k = cfg.kernel
        self.enc = []
        cin = cfg.in_channels
        for i, c in enumerate(cfg.channels):
            self.enc.append(DoubleConv(cin, c, k, g, f"enc{i + 1}"))
            cin = c
        self.mid = DoubleConv(cin, cfg.bottleneck, k, g, "mid")
        self.dec = [None] * cfg.levels
        below = cfg.bottleneck
        for i in reversed(range(cfg.levels)):
            c = cfg.channels[i]
            self.dec[i] = DoubleConv(below + c, c, k, g, f"dec{i + 1}")
            below = c
        self.ssr = None
        if cfg.ssr.enabled:
            if cfg.ssr.placement > cfg.levels:
                raise ValueError(f"ssr.placement={cfg.ssr.placement} but the model has {cfg.levels} levels")
            # own stream: every other layer matches the SSR-free model of the same seed
            self.ssr = SSRBlock(cfg.channels[cfg.ssr.placement - 1], cfg.ssr,
                                make_rng(derive_seed(cfg.seed, 3)))
        self.out = Conv2d(cfg.channels[0], cfg.in_channels, 1, g, "out")

    def __call__(self, x) -> Tensor:
        x = x if isinstance(x, Tensor) else Tensor(x)
        m = self.cfg.multiple
        if x.ndim != 4 or x.shape[1] != self.cfg.in_channels or x.shape[2] % m or x.shape[3] % m:
            raise ad.ShapeError(f"model expects (B, {self.cfg.in_channels}, H, W) with H, W divisible "
                                f"by {m}, got {x.shape}")
        skips = []
        h = x
        for block in self.enc:
            h = block(h)
            skips.append(h)
            h = ad.avgpool2(h)
        h = self.mid(h)
        for i in reversed(range(self.cfg.levels)):
            h = ad.bilinear_up2(h)
            h = self.dec[i](ad.concat_channels(h, skips[i]))
            if self.ssr is not None and i + 1 == self.cfg.ssr.placement:
                h = self.ssr(skips[i], h)
        return self.out(h)


def build_model(cfg: ModelConfig) -> UNet:
    return UNet(cfg)
