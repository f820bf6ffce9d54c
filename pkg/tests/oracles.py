"""Slow, literal reference computations used only by the tests.

Nothing here imports from ``specden``; each function follows the textbook
definition with explicit loops so it stays independent of the vectorised
code it checks.
"""
import cmath
import math
from fractions import Fraction

import numpy as np


def dft2_direct(img):
    h, w = img.shape
    out = np.zeros((h, w), dtype=complex)
    for u in range(h):
        for v in range(w):
            acc = 0j
            for y in range(h):
                for x in range(w):
                    acc += img[y, x] * cmath.exp(-2j * math.pi * (u * y / h + v * x / w))
            out[u, v] = acc
    return out


def idft2_direct(coeffs):
    h, w = coeffs.shape
    out = np.zeros((h, w), dtype=complex)
    for y in range(h):
        for x in range(w):
            acc = 0j
            for u in range(h):
                for v in range(w):
                    acc += coeffs[u, v] * cmath.exp(2j * math.pi * (u * y / h + v * x / w))
            out[y, x] = acc / (h * w)
    return out


def centred(idx, n):
    return idx if idx < n - n // 2 else idx - n


def norm_radius(u, v, h, w):
    return math.sqrt((centred(u, h) / h) ** 2 + (centred(v, w) / w) ** 2)


def band_of(u, v, h, w, num_bands):
    """Band of frequency (u, v), comparing squared radii as exact fractions."""
    r2 = Fraction(centred(u, h) ** 2, h * h) + Fraction(centred(v, w) ** 2, w * w)
    for i in range(num_bands):
        lo2 = Fraction(i * i, 2 * num_bands * num_bands)
        hi2 = Fraction((i + 1) ** 2, 2 * num_bands * num_bands)
        if lo2 <= r2 < hi2:
            return i
    return num_bands - 1


def conv2d_naive(x, w, b):
    nb, c, h, wd = x.shape
    o, _, k, _ = w.shape
    p = k // 2
    out = np.zeros((nb, o, h, wd))
    for n in range(nb):
        for oc in range(o):
            for i in range(h):
                for j in range(wd):
                    acc = b[oc]
                    for ic in range(c):
                        for a in range(k):
                            for bb in range(k):
                                y, xx = i + a - p, j + bb - p
                                if 0 <= y < h and 0 <= xx < wd:
                                    acc += w[oc, ic, a, bb] * x[n, ic, y, xx]
                    out[n, oc, i, j] = acc
    return out


def bilinear_up2_formula(x):
    """Half-pixel bilinear upsampling by 2, evaluated per output pixel."""
    h, w = x.shape
    out = np.zeros((2 * h, 2 * w))
    for i in range(2 * h):
        for j in range(2 * w):
            sy = min(max((i + 0.5) / 2 - 0.5, 0.0), h - 1)
            sx = min(max((j + 0.5) / 2 - 0.5, 0.0), w - 1)
            y0, x0 = int(math.floor(sy)), int(math.floor(sx))
            y1, x1 = min(y0 + 1, h - 1), min(x0 + 1, w - 1)
            fy, fx = sy - y0, sx - x0
            out[i, j] = ((1 - fy) * (1 - fx) * x[y0, x0] + (1 - fy) * fx * x[y0, x1]
                         + fy * (1 - fx) * x[y1, x0] + fy * fx * x[y1, x1])
    return out


def jacobi_eigenvalues(a, sweeps=100, tol=1e-15):
    """Cyclic Jacobi eigenvalue iteration for a symmetric matrix."""
    a = np.array(a, dtype=float)
    n = a.shape[0]
    for _ in range(sweeps):
        off = math.sqrt(sum(a[i, j] ** 2 for i in range(n) for j in range(n) if i != j))
        if off < tol * max(1.0, np.abs(a).max()):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if abs(a[p, q]) < 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2 * a[p, q])
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1))
                c = 1 / math.sqrt(t * t + 1)
                s = t * c
                rot = np.eye(n)
                rot[p, p] = rot[q, q] = c
                rot[p, q] = s
                rot[q, p] = -s
                a = rot.T @ a @ rot
    return np.sort(np.diag(a))


def largest_singular_value(m):
    m = np.asarray(m, dtype=float)
    return math.sqrt(max(jacobi_eigenvalues(m.T @ m)[-1], 0.0))


def gauss_jordan_inverse(a):
    a = np.array(a, dtype=float)
    n = a.shape[0]
    aug = np.hstack([a, np.eye(n)])
    for col in range(n):
        piv = col + int(np.argmax(np.abs(aug[col:, col])))
        aug[[col, piv]] = aug[[piv, col]]
        aug[col] /= aug[col, col]
        for r in range(n):
            if r != col:
                aug[r] -= aug[r, col] * aug[col]
    return aug[:, n:]


def ssim_literal(a, b, size=11, sigma=1.5, k1=0.01, k2=0.03, data_range=1.0):
    """Windowed SSIM evaluated position by position over valid windows."""
    ax = np.arange(size) - (size - 1) / 2
    g1 = np.exp(-ax ** 2 / (2 * sigma ** 2))
    win = np.outer(g1, g1)
    win /= win.sum()
    c1, c2 = (k1 * data_range) ** 2, (k2 * data_range) ** 2
    h, w = a.shape
    vals = []
    for i in range(h - size + 1):
        for j in range(w - size + 1):
            pa = a[i:i + size, j:j + size]
            pb = b[i:i + size, j:j + size]
            ma, mb = (win * pa).sum(), (win * pb).sum()
            va = (win * (pa - ma) ** 2).sum()
            vb = (win * (pb - mb) ** 2).sum()
            cov = (win * (pa - ma) * (pb - mb)).sum()
            vals.append(((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma ** 2 + mb ** 2 + c1) * (va + vb + c2)))
    return float(np.mean(vals))


def circular_conv_norm(w, h, wd, iters=500, seed=0):
    """Power iteration on the circular multichannel cross-correlation operator."""
    o, c, k, _ = w.shape
    p = k // 2

    def apply(x):
        out = np.zeros((o, h, wd))
        for a in range(k):
            for b in range(k):
                shifted = np.roll(x, shift=(-(a - p), -(b - p)), axis=(1, 2))
                out += np.einsum("oc,chw->ohw", w[:, :, a, b], shifted)
        return out

    def adjoint(y):
        out = np.zeros((c, h, wd))
        for a in range(k):
            for b in range(k):
                back = np.einsum("oc,ohw->chw", w[:, :, a, b], y)
                out += np.roll(back, shift=(a - p, b - p), axis=(1, 2))
        return out

    x = np.random.default_rng(seed).standard_normal((c, h, wd))
    x /= np.linalg.norm(x)
    for _ in range(iters):
        x = adjoint(apply(x))
        x /= np.linalg.norm(x)
    return float(np.linalg.norm(apply(x)))


def central_difference(f, x, eps=1e-6):
    """Gradient of scalar ``f`` at array ``x`` by central differences."""
    x = np.array(x, dtype=float)
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = f(x)
        flat[i] = orig - eps
        fm = f(x)
        flat[i] = orig
        gf[i] = (fp - fm) / (2 * eps)
    return g


def rel_error(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-12))


def dft2_matrix(img):
    """Direct-sum DFT written as products with explicit DFT matrices."""
    h, w = img.shape
    fh = np.exp(-2j * np.pi * np.outer(np.arange(h), np.arange(h)) / h)
    fw = np.exp(-2j * np.pi * np.outer(np.arange(w), np.arange(w)) / w)
    return fh @ img @ fw


def hf_ratio_direct(img, rc):
    h, w = img.shape
    f = dft2_matrix(img)
    hi = tot = 0.0
    for u in range(h):
        for v in range(w):
            if u == 0 and v == 0:
                continue
            e = abs(f[u, v]) ** 2
            tot += e
            if norm_radius(u, v, h, w) >= rc:
                hi += e
    return hi / tot if tot > 0 else 0.0
