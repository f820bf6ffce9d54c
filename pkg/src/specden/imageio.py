"""Binary PGM (P5) and PPM (P6) images with maxval 255.

Pixels load as float64 in [0, 1]; grayscale as ``(H, W)``, RGB as
``(3, H, W)``. Saving clips to [0, 1] and rounds to the nearest level.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np


class ImageFormatError(ValueError):
    pass


def _tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    """First ``count`` header tokens (skipping comments) and the offset after them."""
    out, i, n = [], 0, len(data)
    while len(out) < count:
        while i < n and data[i:i + 1].isspace():
            i += 1
        if i < n and data[i:i + 1] == b"#":
            while i < n and data[i:i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        start = i
        while i < n and not data[i:i + 1].isspace() and data[i:i + 1] != b"#":
            i += 1
        if start == i:
            raise ImageFormatError("truncated header")
        out.append(data[start:i])
    if i >= n:
        raise ImageFormatError("missing pixel data")
    return out, i + 1  # exactly one whitespace byte before the raster


def decode(data: bytes) -> np.ndarray:
    toks, off = _tokens(data, 4)
    magic = toks[0]
    if magic not in (b"P5", b"P6"):
        raise ImageFormatError(f"unsupported magic {magic!r}; only P5/P6")
    try:
        w, h, maxval = (int(t) for t in toks[1:])
    except ValueError as e:
        raise ImageFormatError("non-integer header field") from e
    if maxval != 255:
        raise ImageFormatError(f"maxval {maxval} unsupported; only 255")
    if w < 1 or h < 1:
        raise ImageFormatError(f"bad dimensions {w}x{h}")
    ch = 1 if magic == b"P5" else 3
    need = w * h * ch
    raster = np.frombuffer(data, dtype=np.uint8, count=need, offset=off) if len(data) - off >= need else None
    if raster is None:
        raise ImageFormatError(f"expected {need} pixel bytes, found {len(data) - off}")
    img = raster.astype(np.float64) / 255.0
    if ch == 1:
        return img.reshape(h, w)
    return img.reshape(h, w, 3).transpose(2, 0, 1).copy()


def encode(img) -> bytes:
    a = np.asarray(img, dtype=np.float64)
    if a.ndim == 3 and a.shape[0] == 1:
        a = a[0]
    if a.ndim == 2:
        magic, raster = b"P5", a
    elif a.ndim == 3 and a.shape[0] == 3:
        magic, raster = b"P6", a.transpose(1, 2, 0)
    else:
        raise ImageFormatError(f"cannot encode array of shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ImageFormatError("image contains non-finite values")
    q = np.rint(np.clip(raster, 0.0, 1.0) * 255.0).astype(np.uint8)
    h, w = q.shape[:2]
    return b"%s\n%d %d\n255\n" % (magic, w, h) + q.tobytes()


def load_image(path) -> np.ndarray:
    return decode(Path(path).read_bytes())


def save_image(path, img) -> None:
    Path(path).write_bytes(encode(img))


def list_images(directory) -> list[Path]:
    return sorted(p for p in Path(directory).iterdir() if p.suffix.lower() in (".pgm", ".ppm"))
