"""Spectral-norm estimation and clamping for convolution kernels.

A kernel ``(O, C, Kh, Kw)`` is viewed as the matrix ``(O, C*Kh*Kw)`` in
row-major order, so entry ``[o, (c*Kh + p)*Kw + q]`` is ``w[o, c, p, q]``.
Its largest singular value is tracked by power iteration with persistent
vectors, and the clamp rescales the kernel by ``1 / max(1, sigma/beta)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .noise import rng


@dataclass
class SpectralNormState:
    layer_id: str
    u: np.ndarray
    v: np.ndarray
    beta: float = 1.0
    last_estimate: float = 0.0

    @classmethod
    def init(cls, layer_id: str, shape: tuple, beta: float = 1.0, seed: int = 0) -> "SpectralNormState":
        if beta <= 0:
            raise ValueError("beta must be > 0")
        o = shape[0]
        n = int(np.prod(shape[1:]))
        g = rng(seed)
        u = g.standard_normal(o)
        v = g.standard_normal(n)
        return cls(layer_id, u / np.linalg.norm(u), v / np.linalg.norm(v), float(beta))


def reshape_kernel(w: np.ndarray) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    return w.reshape(w.shape[0], -1)


def unreshape_kernel(mat: np.ndarray, shape: tuple) -> np.ndarray:
    return np.asarray(mat).reshape(shape)


def power_iterate(state: SpectralNormState, w_mat: np.ndarray, iters: int = 1) -> SpectralNormState:
    """Warm-started power iteration; updates ``state`` in place and returns it."""
    if iters < 1:
        raise ValueError("iters must be >= 1")
    w_mat = np.asarray(w_mat, dtype=np.float64)
    if not np.any(w_mat):
        state.last_estimate = 0.0
        return state
    u, v = state.u, state.v
    for _ in range(iters):
        v_new = w_mat.T @ u
        nv = np.linalg.norm(v_new)
        if nv == 0.0:
            # u orthogonal to the row space; restart from the previous v
            u_new = w_mat @ v
            u = u_new / np.linalg.norm(u_new)
            v_new = w_mat.T @ u
            nv = np.linalg.norm(v_new)
        v = v_new / nv
        u_new = w_mat @ v
        u = u_new / np.linalg.norm(u_new)
    state.u, state.v = u, v
    state.last_estimate = max(float(u @ w_mat @ v), 0.0)
    return state


def spectral_norm(w: np.ndarray, iters: int = 50, seed: int = 0) -> float:
    """Fresh-start estimate of the reshaped kernel's largest singular value."""
    st = SpectralNormState.init("probe", np.shape(w), seed=seed)
    return power_iterate(st, reshape_kernel(w), iters).last_estimate


def clamp_weights(w: np.ndarray, state: SpectralNormState, beta: float | None = None) -> tuple[np.ndarray, bool]:
    """Rescale ``w`` onto the beta-ball using ``state.last_estimate``.

    Returns the (possibly unchanged) kernel and whether it was rescaled.
    """
    beta = state.beta if beta is None else float(beta)
    if beta <= 0:
        raise ValueError("beta must be > 0")
    sigma = state.last_estimate
    if sigma <= beta:
        return w, False
    return w * (beta / sigma), True


def per_frequency_gain(w: np.ndarray, h: int, wd: int) -> np.ndarray:
    """Largest singular value of the ``O x C`` transfer matrix at every DFT frequency.

    This is the exact per-frequency gain of the *circular* convolution on an
    ``h x wd`` grid; its maximum is that operator's spectral norm.
    """
    w = np.asarray(w, dtype=np.float64)
    o, c, kh, kw = w.shape
    ph, pw = kh // 2, kw // 2
    fu = np.fft.fftfreq(h)
    fv = np.fft.fftfreq(wd)
    eu = np.exp(2j * np.pi * np.outer(fu, np.arange(kh) - ph))  # (h, kh)
    ev = np.exp(2j * np.pi * np.outer(fv, np.arange(kw) - pw))  # (wd, kw)
    transfer = np.einsum("ocpq,up,vq->uvoc", w, eu, ev)
    return np.linalg.svd(transfer, compute_uv=False)[..., 0]
