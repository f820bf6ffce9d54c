"""Procedural texture images used as the bundled toy training corpus."""
from __future__ import annotations

import numpy as np

from .noise import derive_seed, rng


def texture(size: int, seed: int) -> np.ndarray:
    """One ``size x size`` image in [0.1, 0.9]: oriented sinusoids plus flat shapes."""
    g = rng(seed)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    img = np.zeros((size, size))
    for _ in range(g.integers(3, 7)):
        freq = float(np.exp(g.uniform(np.log(1.0 / 64), np.log(0.45))))  # cycles per pixel
        theta = g.uniform(0, np.pi)
        phase = g.uniform(0, 2 * np.pi)
        amp = g.uniform(0.3, 1.0) / (1.0 + 2.0 * freq)
        img += amp * np.sin(2 * np.pi * freq * (np.cos(theta) * xx + np.sin(theta) * yy) + phase)
    for _ in range(g.integers(2, 6)):
        level = g.uniform(-1.0, 1.0)
        cy, cx = g.uniform(0, size, 2)
        if g.random() < 0.5:
            hy, hx = g.uniform(size / 16, size / 4, 2)
            mask = (np.abs(yy - cy) < hy) & (np.abs(xx - cx) < hx)
        else:
            rad = g.uniform(size / 16, size / 4)
            mask = (yy - cy) ** 2 + (xx - cx) ** 2 < rad * rad
        img[mask] = 0.5 * img[mask] + level
    lo, hi = img.min(), img.max()
    return 0.1 + 0.8 * (img - lo) / (hi - lo)


def toy_corpus(count: int = 16, size: int = 128, seed: int = 0) -> list[np.ndarray]:
    return [texture(size, derive_seed(seed, i)) for i in range(count)]
