"""2-D DFT helpers, radial frequency bands and band-wise similarity curves.

Frequencies are indexed as NumPy lays out an unshifted FFT: DC at ``(0, 0)``.
The centred integer frequency of index ``u`` along an axis of length ``n`` is
``u`` for ``u < n/2`` and ``u - n`` otherwise, and the normalised radius is

    r(u, v) = sqrt((u'/H)**2 + (v'/W)**2),   0 <= r <= sqrt(2)/2.

Bands are equal-width annuli over ``[0, sqrt(2)/2]``.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Literal, Sequence

import numpy as np

R_MAX = math.sqrt(2.0) / 2.0
EMPTY_BAND = 0.0
DEFAULT_BANDS = 5
DEFAULT_CUTOFF = 0.25
_IMAG_TOL = 1e-10
_NORM_TOL = 1e-12

TargetKind = Literal["noisy", "ground_truth"]
_CSV_TARGET = {"noisy": "nos", "ground_truth": "gt"}


class SpectrumError(RuntimeError):
    pass


@dataclass(frozen=True)
class Spectrum2D:
    coeffs: np.ndarray
    source_shape: tuple[int, int]


@dataclass(frozen=True)
class BandSet:
    num_bands: int
    masks: np.ndarray  # (B, H, W) bool
    edges: np.ndarray  # (B + 1,)
    empty: tuple[bool, ...] = field(default=())

    @property
    def shape(self) -> tuple[int, int]:
        return self.masks.shape[1:]


@dataclass(frozen=True)
class IpfsRecord:
    iteration: int
    target_kind: TargetKind
    similarities: tuple[float, ...]


def dft2(img) -> Spectrum2D:
    """Unnormalised forward 2-D DFT of a real ``H x W`` image."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2 or min(img.shape) < 1:
        raise ValueError(f"dft2 expects a non-empty 2-D image, got shape {img.shape}")
    return Spectrum2D(np.fft.fft2(img), img.shape)


def idft2(spec: Spectrum2D) -> np.ndarray:
    """Inverse of :func:`dft2`; returns the complex result."""
    return np.fft.ifft2(spec.coeffs)


def radius_grid(h: int, w: int) -> np.ndarray:
    fu = np.fft.fftfreq(h)[:, None]
    fv = np.fft.fftfreq(w)[None, :]
    return np.sqrt(fu * fu + fv * fv)


def _band_index(h: int, w: int, num_bands: int) -> np.ndarray:
    """``floor(r / (R_MAX / B))`` in exact integer arithmetic.

    Frequencies lying exactly on an edge (e.g. (1, 7) and (5, 5) on a 14x14
    grid) would otherwise be split by rounding.
    """
    cu = np.fft.fftfreq(h, 1.0 / h).astype(np.int64)[:, None]
    cv = np.fft.fftfreq(w, 1.0 / w).astype(np.int64)[None, :]
    # (r / edge_width)^2 = 2 B^2 ((u' w)^2 + (v' h)^2) / (h w)^2
    num = [[2 * num_bands ** 2 * (int(a) * w) ** 2 + 2 * num_bands ** 2 * (int(b) * h) ** 2
            for b in cv[0]] for a in cu[:, 0]]
    den = (h * w) ** 2
    return np.array([[math.isqrt(n // den) for n in row] for row in num], dtype=np.int64)


def band_masks(h: int, w: int, num_bands: int = DEFAULT_BANDS) -> BandSet:
    if num_bands < 1:
        raise ValueError("num_bands must be >= 1")
    if h < 2 or w < 2:
        raise ValueError(f"band_masks needs H, W >= 2, got {h}x{w}")
    edges = np.arange(num_bands + 1) * (R_MAX / num_bands)
    idx = np.minimum(_band_index(h, w, num_bands), num_bands - 1)
    masks = np.stack([idx == i for i in range(num_bands)])
    empty = tuple(not m.any() for m in masks)
    return BandSet(num_bands, masks, edges, empty)


def band_filter(img, bands: BandSet, i: int) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if not 0 <= i < bands.num_bands:
        raise IndexError(f"band {i} out of range for {bands.num_bands} bands")
    if img.shape != bands.shape:
        raise ValueError(f"image shape {img.shape} does not match band set {bands.shape}")
    out = np.fft.ifft2(np.fft.fft2(img) * bands.masks[i])
    residue = np.max(np.abs(out.imag)) if out.size else 0.0
    if residue > _IMAG_TOL * max(1.0, np.max(np.abs(img))):
        raise SpectrumError(f"band {i} filter left imaginary residue {residue:.3e}")
    return out.real


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    na = math.sqrt(float(np.sum(a * a)))
    nb = math.sqrt(float(np.sum(b * b)))
    if na < _NORM_TOL or nb < _NORM_TOL:
        return EMPTY_BAND
    return float(np.clip(np.sum(a * b) / (na * nb), -1.0, 1.0))


def band_similarity(a, b, bands: BandSet, i: int) -> float:
    """Cosine similarity of the band-``i`` components of two images.

    Returns ``EMPTY_BAND`` (0.0) when either component has norm below 1e-12.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    return _cosine(band_filter(a, bands, i), band_filter(b, bands, i))


def _channels(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        return img[None]
    if img.ndim == 3:
        return img
    raise ValueError(f"expected (H, W) or (C, H, W) image, got shape {img.shape}")


def band_similarities(out, target, bands: BandSet) -> tuple[float, ...]:
    """All band similarities; multi-channel images average over channels."""
    oc, tc = _channels(out), _channels(target)
    if oc.shape != tc.shape:
        raise ValueError(f"shape mismatch {oc.shape} vs {tc.shape}")
    fo = np.fft.fft2(oc)
    ft = np.fft.fft2(tc)
    sims = []
    for i in range(bands.num_bands):
        m = bands.masks[i]
        per_ch = []
        for c in range(oc.shape[0]):
            a = np.fft.ifft2(fo[c] * m).real
            b = np.fft.ifft2(ft[c] * m).real
            per_ch.append(_cosine(a, b))
        sims.append(float(np.mean(per_ch)))
    return tuple(sims)


def ipfs_curve(outputs: Iterable[tuple[int, np.ndarray]], target, target_kind: TargetKind,
               bands: BandSet) -> list[IpfsRecord]:
    """Band-wise similarity of each recorded network output against one target."""
    if target_kind not in _CSV_TARGET:
        raise ValueError(f"target_kind must be 'noisy' or 'ground_truth', got {target_kind!r}")
    records = [IpfsRecord(int(t), target_kind, band_similarities(img, target, bands))
               for t, img in outputs]
    if not records:
        raise ValueError("ipfs_curve needs at least one recorded output")
    return records


def hf_ratio(img, cutoff: float = DEFAULT_CUTOFF) -> float:
    """Share of non-DC spectral energy at normalised radius >= ``cutoff``."""
    ch = _channels(img)
    energy = np.abs(np.fft.fft2(ch)) ** 2
    energy = energy.sum(axis=0)
    energy[0, 0] = 0.0
    total = float(energy.sum())
    if total <= 0.0:
        return 0.0
    r = radius_grid(*energy.shape)
    return float(energy[r >= cutoff].sum() / total)


def format_ipfs_csv(records: Sequence[IpfsRecord], num_bands: int, header_comment: str | None = None) -> str:
    buf = io.StringIO()
    if header_comment is not None:
        buf.write(f"# {header_comment}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["iter", "target"] + [f"band_{i}" for i in range(num_bands)])
    for rec in records:
        if len(rec.similarities) != num_bands:
            raise ValueError("record band count does not match header")
        writer.writerow([rec.iteration, _CSV_TARGET[rec.target_kind]]
                        + [f"{s:.6f}" for s in rec.similarities])
    return buf.getvalue()


def parse_ipfs_csv(text: str) -> list[IpfsRecord]:
    kinds = {v: k for k, v in _CSV_TARGET.items()}
    rows = [r for r in csv.reader(io.StringIO(text)) if r and not r[0].startswith("#")]
    out = []
    for row in rows[1:]:
        out.append(IpfsRecord(int(row[0]), kinds[row[1]], tuple(float(v) for v in row[2:])))
    return out
