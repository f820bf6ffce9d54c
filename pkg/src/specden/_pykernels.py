"""NumPy implementations of the kernels in ``_ckernels.pyx``.

Kept operation-for-operation compatible with the compiled versions so the
two backends agree bit for bit.
"""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def im2col(xpad, k, h, w):
    nb, nc = xpad.shape[:2]
    win = sliding_window_view(xpad, (k, k), axis=(2, 3))  # B,C,h,w,k,k
    return np.ascontiguousarray(win.transpose(0, 1, 4, 5, 2, 3)).reshape(nb, nc * k * k, h * w)


def col2im(cols, nc, k, h, w):
    nb = cols.shape[0]
    out = np.zeros((nb, nc, h + k - 1, w + k - 1))
    c6 = cols.reshape(nb, nc, k, k, h, w)
    for ki in range(k):
        for kj in range(k):
            out[:, :, ki:ki + h, kj:kj + w] += c6[:, :, ki, kj]
    return out


def poisson_inversion(mu, p0, u, kmax):
    counts = np.zeros(mu.shape[0], dtype=np.int64)
    p = p0.copy()
    cdf = p0.copy()
    active = np.flatnonzero(u > cdf)
    while active.size:
        counts[active] += 1
        p[active] *= mu[active] / counts[active].astype(np.float64)
        cdf[active] += p[active]
        keep = (u[active] > cdf[active]) & (counts[active] < kmax)
        active = active[keep]
    return counts
