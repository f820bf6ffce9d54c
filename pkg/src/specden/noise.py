"""Seeded synthetic noise: Gaussian and Poisson, fixed level or per-image range.

All draws come from NumPy's ``Philox`` bit generator, a counter-based RNG:
pixel ``n`` of the raster always consumes the ``n``-th variate of the stream
keyed by the seed, independent of how callers iterate. Images are expected in
``[0, 1]``; noisy outputs are not clipped.

Poisson counts use CDF inversion with one uniform per pixel while the mean
``lam * x`` is below 30 and a rounded normal approximation (same uniform,
mapped through the normal quantile) at or above it.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.special import ndtri

from . import kernels

POISSON_NORMAL_THRESHOLD = 30.0
_POISSON_KMAX = 256

Level = Union[float, tuple[float, float]]
KINDS = ("gaussian_fixed", "gaussian_range", "poisson_fixed", "poisson_range")


def rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed) & 0xFFFFFFFFFFFFFFFF))


def derive_seed(seed: int, *keys: int) -> int:
    """Independent 64-bit seed for a (seed, key...) tuple."""
    ss = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class NoiseModel:
    kind: str
    sigma: Level | None = None
    lam: Level | None = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}; expected one of {KINDS}")
        gaussian = self.kind.startswith("gaussian")
        ranged = self.kind.endswith("range")
        level = self.sigma if gaussian else self.lam
        name = "sigma" if gaussian else "lambda"
        if level is None:
            raise ValueError(f"{self.kind} needs {name}")
        if ranged:
            if not (isinstance(level, (tuple, list)) and len(level) == 2):
                raise ValueError(f"{self.kind} needs {name} as [lo, hi]")
            lo, hi = float(level[0]), float(level[1])
            if lo > hi:
                raise ValueError(f"{name} range has lo > hi")
            object.__setattr__(self, "sigma" if gaussian else "lam", (lo, hi))
            vals = (lo, hi)
        else:
            if isinstance(level, (tuple, list)):
                raise ValueError(f"{self.kind} needs a scalar {name}")
            vals = (float(level),)
        if gaussian and min(vals) < 0:
            raise ValueError("sigma must be >= 0")
        if not gaussian and min(vals) <= 0:
            raise ValueError("lambda must be > 0")

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseModel":
        allowed = {"kind", "sigma", "lambda", "seed"}
        unknown = set(d) - allowed
        if unknown:
            raise ValueError(f"unknown noise keys: {sorted(unknown)}")
        if "kind" not in d:
            raise ValueError("noise config needs 'kind'")
        sig = d.get("sigma")
        lam = d.get("lambda")
        return cls(d["kind"], tuple(sig) if isinstance(sig, list) else sig,
                   tuple(lam) if isinstance(lam, list) else lam, int(d.get("seed", 0)))

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "seed": self.seed}
        if self.sigma is not None:
            out["sigma"] = list(self.sigma) if isinstance(self.sigma, tuple) else self.sigma
        if self.lam is not None:
            out["lambda"] = list(self.lam) if isinstance(self.lam, tuple) else self.lam
        return out


def sample_level(model: NoiseModel, seed: int) -> float:
    """Concrete sigma (0-255 units) or lambda for one image."""
    level = model.sigma if model.kind.startswith("gaussian") else model.lam
    if model.kind.endswith("fixed"):
        return float(level)
    lo, hi = level
    return float(rng(seed).uniform(lo, hi))


def add_gaussian(img, sigma255: float, seed: int) -> np.ndarray:
    if sigma255 < 0:
        raise ValueError("sigma must be >= 0")
    img = np.asarray(img, dtype=np.float64)
    if sigma255 == 0:
        return img.copy()
    return img + rng(seed).standard_normal(img.shape) * (sigma255 / 255.0)


def poisson_counts(mu: np.ndarray, seed: int) -> np.ndarray:
    """Poisson(mu) samples, one uniform per element."""
    mu = np.ascontiguousarray(mu, dtype=np.float64)
    flat = mu.ravel()
    u = rng(seed).random(flat.shape[0])
    counts = np.zeros(flat.shape[0], dtype=np.int64)
    small = flat < POISSON_NORMAL_THRESHOLD
    if small.any():
        ms = np.ascontiguousarray(flat[small])
        counts[small] = kernels.poisson_inversion(ms, np.exp(-ms), np.ascontiguousarray(u[small]),
                                                  _POISSON_KMAX)
    big = ~small
    if big.any():
        mb = flat[big]
        z = ndtri(u[big])
        counts[big] = np.maximum(np.rint(mb + np.sqrt(mb) * z), 0).astype(np.int64)
    return counts.reshape(mu.shape)


def add_poisson(img, lam: float, seed: int) -> np.ndarray:
    if lam <= 0:
        raise ValueError("lambda must be > 0")
    img = np.asarray(img, dtype=np.float64)
    if np.any(img < 0):
        raise ValueError("Poisson noise needs non-negative intensities")
    return poisson_counts(lam * img, seed) / lam


def apply_noise(model: NoiseModel, img, seed: int | None = None) -> np.ndarray:
    """Noisy copy of ``img``; the level (for range kinds) and field both derive from ``seed``."""
    seed = model.seed if seed is None else seed
    level = sample_level(model, derive_seed(seed, 0))
    field_seed = derive_seed(seed, 1)
    if model.kind.startswith("gaussian"):
        return add_gaussian(img, level, field_seed)
    return add_poisson(img, level, field_seed)
