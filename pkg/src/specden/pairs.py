"""Neighbour sub-sampled noisy pairs and frequency-selection routing."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .noise import rng
from .spectrum import DEFAULT_CUTOFF, hf_ratio

# the 12 ordered pairs of distinct positions in a 2x2 cell, positions
# numbered row-major: 0=(0,0) 1=(0,1) 2=(1,0) 3=(1,1)
ORDERED_PAIRS = np.array([(a, b) for a in range(4) for b in range(4) if a != b])
_TIE_TOL = 1e-12


@dataclass(frozen=True)
class NoisePair:
    input_img: np.ndarray
    target_img: np.ndarray
    swapped: bool
    hf_input: float
    hf_target: float


def neighbor_indices(h: int, w: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Cell positions (0..3) chosen for each sub-image, each ``(h/2, w/2)``."""
    if h % 2 or w % 2:
        raise ValueError(f"neighbour sub-sampling needs even dims, got {h}x{w}")
    choice = rng(seed).integers(0, len(ORDERED_PAIRS), size=(h // 2, w // 2))
    pos = ORDERED_PAIRS[choice]
    return pos[..., 0], pos[..., 1]


def gather_cells(img, pos: np.ndarray) -> np.ndarray:
    """Pick position ``pos[i, j]`` from cell ``(i, j)`` of ``img`` (last two axes spatial)."""
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape[-2:]
    cells = img.reshape(img.shape[:-2] + (h // 2, 2, w // 2, 2))
    cells = np.moveaxis(cells, -3, -2).reshape(img.shape[:-2] + (h // 2, w // 2, 4))
    return np.take_along_axis(cells, np.broadcast_to(pos[..., None], cells.shape[:-1] + (1,)), axis=-1)[..., 0]


def neighbor_pairs(img, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Two half-resolution sub-images drawn from distinct pixels of every 2x2 cell.

    Works on ``(H, W)`` or ``(C, H, W)`` input; all channels share the positions.
    """
    img = np.asarray(img, dtype=np.float64)
    p1, p2 = neighbor_indices(*img.shape[-2:], seed)
    return gather_cells(img, p1), gather_cells(img, p2)


def fsd_route(sub1, sub2, cutoff: float = DEFAULT_CUTOFF) -> NoisePair:
    """Send the sub-image with more high-frequency energy through the network.

    Ties (difference below 1e-12) keep ``sub1`` as the input.
    """
    sub1 = np.asarray(sub1, dtype=np.float64)
    sub2 = np.asarray(sub2, dtype=np.float64)
    if sub1.shape != sub2.shape:
        raise ValueError(f"shape mismatch {sub1.shape} vs {sub2.shape}")
    h1, h2 = hf_ratio(sub1, cutoff), hf_ratio(sub2, cutoff)
    if h2 - h1 >= _TIE_TOL:
        return NoisePair(sub2, sub1, True, h2, h1)
    return NoisePair(sub1, sub2, False, h1, h2)


def plain_pair(sub1, sub2, cutoff: float = DEFAULT_CUTOFF) -> NoisePair:
    """Fixed roles (no routing); hf values still recorded for the log."""
    sub1 = np.asarray(sub1, dtype=np.float64)
    sub2 = np.asarray(sub2, dtype=np.float64)
    return NoisePair(sub1, sub2, False, hf_ratio(sub1, cutoff), hf_ratio(sub2, cutoff))
