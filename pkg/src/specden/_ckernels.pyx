# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops: convolution unfold/fold and Poisson inversion.

Each routine performs the same floating-point operations in the same
per-element order as its counterpart in ``_pykernels``, so both backends
return bit-identical arrays.
"""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def im2col(const double[:, :, :, ::1] xpad, int k, int h, int w):
    cdef Py_ssize_t nb = xpad.shape[0], nc = xpad.shape[1]
    cdef Py_ssize_t b, c, ki, kj, i, j, row
    out = np.empty((nb, nc * k * k, h * w), dtype=np.float64)
    cdef double[:, :, ::1] cols = out
    for b in range(nb):
        for c in range(nc):
            for ki in range(k):
                for kj in range(k):
                    row = (c * k + ki) * k + kj
                    for i in range(h):
                        for j in range(w):
                            cols[b, row, i * w + j] = xpad[b, c, i + ki, j + kj]
    return out


def col2im(const double[:, :, ::1] cols, int nc, int k, int h, int w):
    cdef Py_ssize_t nb = cols.shape[0]
    cdef Py_ssize_t b, c, ki, kj, i, j, row
    out = np.zeros((nb, nc, h + k - 1, w + k - 1), dtype=np.float64)
    cdef double[:, :, :, ::1] xpad = out
    for b in range(nb):
        for c in range(nc):
            for ki in range(k):
                for kj in range(k):
                    row = (c * k + ki) * k + kj
                    for i in range(h):
                        for j in range(w):
                            xpad[b, c, i + ki, j + kj] += cols[b, row, i * w + j]
    return out


def poisson_inversion(const double[::1] mu, const double[::1] p0,
                      const double[::1] u, long kmax):
    cdef Py_ssize_t n = mu.shape[0], idx
    cdef long k
    cdef double p, cdf
    out = np.zeros(n, dtype=np.int64)
    cdef cnp.int64_t[::1] counts = out
    for idx in range(n):
        k = 0
        p = p0[idx]
        cdf = p
        while u[idx] > cdf and k < kmax:
            k += 1
            p *= mu[idx] / <double>k
            cdf += p
        counts[idx] = k
    return out
