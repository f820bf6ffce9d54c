"""Dense float64 tensors with a single-use reverse-mode tape.

Only the primitives the denoising pipeline needs are provided. Each op
computes its forward value with NumPy and, when a :class:`Tape` is active
and some input participates in differentiation, appends a node holding a
closure that maps the upstream gradient to input gradients.

Conventions
-----------
conv2d
    Cross-correlation (the kernel is *not* flipped), zero padding of
    ``(K - 1) // 2`` so spatial size is preserved::

        out[b, o, i, j] = bias[o] + sum_{c, p, q} w[o, c, p, q] * xpad[b, c, i + p, j + q]

bilinear_up2
    Half-pixel ("align corners = false") sampling. Output row ``i`` reads the
    source coordinate ``i / 2 - 1 / 4``, clamped to the valid range, so

        out[2m]     = 0.75 * x[m] + 0.25 * x[max(m - 1, 0)]
        out[2m + 1] = 0.75 * x[m] + 0.25 * x[min(m + 1, h - 1)]

    and likewise along columns. Every row of the interpolation matrix sums
    to one, so constants are preserved.
"""
from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg

from . import kernels


class ShapeError(ValueError):
    pass


class NumericalError(ArithmeticError):
    pass


class Tensor:
    """A float64 array, optionally a differentiable parameter leaf."""

    __slots__ = ("data", "grad", "requires_grad", "name", "_tape")

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        arr = np.asarray(data, dtype=np.float64)
        self.data = arr if arr.flags.c_contiguous else arr.copy()
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.name = name
        self._tape: Optional[Tape] = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag}, requires_grad={self.requires_grad})"


class _Node:
    __slots__ = ("out", "inputs", "backward")

    def __init__(self, out, inputs, backward):
        self.out = out
        self.inputs = inputs
        self.backward = backward


class Tape:
    """Append-only record of primitive applications for one forward/backward pass.

    Use as a context manager; ops executed inside the ``with`` block are
    recorded. :meth:`backward` walks the nodes in reverse append order and may
    be called once.
    """

    _stack: list["Tape"] = []

    def __init__(self):
        self.nodes: list[_Node] = []
        self._used = False

    def __enter__(self) -> "Tape":
        Tape._stack.append(self)
        return self

    def __exit__(self, exc_type, *exc) -> None:
        Tape._stack.remove(self)
        if exc_type is not None:
            self.nodes = []

    @classmethod
    def active(cls) -> Optional["Tape"]:
        return cls._stack[-1] if cls._stack else None

    def _tracks(self, t: Tensor) -> bool:
        return t.requires_grad or t._tape is self

    def record(self, out: Tensor, inputs: Sequence[Tensor], backward: Callable) -> None:
        out._tape = self
        self.nodes.append(_Node(out, tuple(inputs), backward))

    def backward(self, loss: Tensor) -> None:
        if self._used:
            raise RuntimeError("tape already consumed; record a new forward pass")
        if loss.data.size != 1 or loss.ndim != 0:
            raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
        if loss._tape is not self:
            raise RuntimeError("loss was not produced on this tape")
        self._used = True
        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        leaves: dict[int, Tensor] = {}
        for node in reversed(self.nodes):
            for t in node.inputs:
                if t.requires_grad and t._tape is not self:
                    leaves[id(t)] = t
            g = grads.pop(id(node.out), None)
            if g is None:
                continue
            for t, gi in zip(node.inputs, node.backward(g)):
                if gi is None or not self._tracks(t):
                    continue
                key = id(t)
                if key in grads:
                    grads[key] = grads[key] + gi
                else:
                    grads[key] = gi
        for key, leaf in leaves.items():
            g = grads.get(key)
            if g is None:
                g = np.zeros_like(leaf.data)
            leaf.grad = g.copy() if leaf.grad is None else leaf.grad + g
        # outputs point back at the tape; dropping the nodes breaks the cycle
        # so activations are freed now rather than at the next gc sweep
        self.nodes = []


def backward(loss: Tensor) -> None:
    """Populate ``.grad`` on every parameter leaf reachable from ``loss``."""
    if loss._tape is None:
        raise RuntimeError("loss is not on a tape; run the forward pass inside `with Tape():`")
    loss._tape.backward(loss)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, inputs: Sequence[Tensor], backward: Callable) -> Tensor:
    out = Tensor(data)
    tape = Tape.active()
    if tape is not None and any(tape._tracks(t) for t in inputs):
        tape.record(out, inputs, backward)
    return out


def _check_same(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


# elementwise ---------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_same(a, b, "add")
    return _make(a.data + b.data, (a, b), lambda g: (g, g))


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_same(a, b, "sub")
    return _make(a.data - b.data, (a, b), lambda g: (g, -g))


def mul_scalar(a: Tensor, s: float) -> Tensor:
    s = float(s)
    return _make(a.data * s, (a,), lambda g: (g * s,))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _make(np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


def mse(x: Tensor, y) -> Tensor:
    """Mean of squared differences, returned as a 0-d tensor."""
    y = _as_tensor(y)
    _check_same(x, y, "mse")
    diff = x.data - y.data
    n = diff.size

    def bw(g):
        gx = (2.0 / n) * g * diff
        return gx, -gx

    return _make(np.asarray(np.mean(diff * diff)), (x, y), bw)


# shape ---------------------------------------------------------------------

def concat_channels(*xs: Tensor) -> Tensor:
    if len(xs) == 1 and isinstance(xs[0], (list, tuple)):
        xs = tuple(xs[0])
    xs = tuple(_as_tensor(x) for x in xs)
    ref = xs[0].shape
    for x in xs[1:]:
        if x.ndim != 4 or x.shape[0] != ref[0] or x.shape[2:] != ref[2:]:
            raise ShapeError(f"concat_channels: incompatible shapes {ref} and {x.shape}")
    splits = np.cumsum([x.shape[1] for x in xs])[:-1]
    return _make(np.concatenate([x.data for x in xs], axis=1), xs,
                 lambda g: tuple(np.split(g, splits, axis=1)))


def reshape(a: Tensor, shape) -> Tensor:
    src = a.shape
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(src),))


def transpose(a: Tensor) -> Tensor:
    """Swap the last two axes."""
    return _make(np.swapaxes(a.data, -1, -2), (a,), lambda g: (np.swapaxes(g, -1, -2),))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner dims differ {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data
    return _make(ad @ bd, (a, b),
                 lambda g: (g @ np.swapaxes(bd, -1, -2), np.swapaxes(ad, -1, -2) @ g))


def tile_channels(maps: Tensor, channels: int) -> Tensor:
    """Turn ``k`` maps ``(B, k, H, W)`` into basis columns ``(B, C*H*W, k)``.

    Column ``j`` holds map ``j`` repeated for every channel, in ``(c, h, w)``
    row-major order: ``V[b, c*H*W + h*W + w, j] = maps[b, j, h, w]``.
    """
    nb, k, h, w = maps.shape
    flat = maps.data.reshape(nb, k, h * w)
    cols = np.tile(flat, (1, 1, channels)).transpose(0, 2, 1)

    def bw(g):
        return (g.transpose(0, 2, 1).reshape(nb, k, channels, h * w).sum(axis=2).reshape(nb, k, h, w),)

    return _make(np.ascontiguousarray(cols), (maps,), bw)


GRAM_EPS_FLOOR = 1e-30


def gram_regularize(gram: Tensor, rel: float) -> Tensor:
    """``G + eps * I`` with ``eps = max(rel * trace(G) / k, 1e-30)``, per batch item.

    The floor only matters for an all-zero basis, where it keeps the system
    positive definite (and the projection returns zero).
    """
    k = gram.shape[-1]
    eye = np.eye(k)
    tr = np.trace(gram.data, axis1=-2, axis2=-1)
    eps = rel * tr / k
    live = eps > GRAM_EPS_FLOOR
    eps = np.where(live, eps, GRAM_EPS_FLOOR)
    out = gram.data + eps[..., None, None] * eye

    def bw(g):
        gtr = np.trace(g, axis1=-2, axis2=-1) * live
        return (g + (rel / k) * gtr[..., None, None] * eye,)

    return _make(out, (gram,), bw)


# spatial -------------------------------------------------------------------

def conv2d(x: Tensor, w: Tensor, b: Optional[Tensor] = None) -> Tensor:
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError(f"conv2d: expected 4-D input and kernel, got {x.shape} and {w.shape}")
    nb, c, h, wd = x.shape
    o, cw, kh, kw = w.shape
    if cw != c:
        raise ShapeError(f"conv2d: input has {c} channels but kernel {w.shape} expects {cw}")
    if kh != kw or kh % 2 == 0:
        raise ShapeError(f"conv2d: kernel must be square and odd, got {kh}x{kw}")
    if b is not None and b.shape != (o,):
        raise ShapeError(f"conv2d: bias shape {b.shape} does not match {o} output channels")
    k, pad = kh, kh // 2
    if pad:
        xpad = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    else:
        xpad = x.data
    cols = kernels.im2col(np.ascontiguousarray(xpad), k, h, wd)
    wmat = w.data.reshape(o, c * k * k)
    out = wmat @ cols
    if b is not None:
        out += b.data[None, :, None]
    out = out.reshape(nb, o, h, wd)

    def bw(g):
        g2 = g.reshape(nb, o, h * wd)
        gw = (g2 @ cols.transpose(0, 2, 1)).sum(axis=0).reshape(w.shape)
        dxpad = kernels.col2im(np.ascontiguousarray(wmat.T @ g2), c, k, h, wd)
        gx = dxpad[:, :, pad:pad + h, pad:pad + wd] if pad else dxpad
        gb = g2.sum(axis=(0, 2)) if b is not None else None
        return gx, gw, gb

    inputs = (x, w) if b is None else (x, w, b)
    return _make(out, inputs, bw)


def avgpool2(x: Tensor) -> Tensor:
    nb, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"avgpool2: spatial dims must be even, got {h}x{w}")
    out = x.data.reshape(nb, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5))

    def bw(g):
        return (np.repeat(np.repeat(g, 2, axis=2), 2, axis=3) * 0.25,)

    return _make(out, (x,), bw)


def upsample_matrix(n: int) -> np.ndarray:
    """The ``2n x n`` half-pixel bilinear interpolation matrix."""
    m = np.zeros((2 * n, n))
    for i in range(n):
        m[2 * i, i] += 0.75
        m[2 * i, max(i - 1, 0)] += 0.25
        m[2 * i + 1, i] += 0.75
        m[2 * i + 1, min(i + 1, n - 1)] += 0.25
    return m


def bilinear_up2(x: Tensor) -> Tensor:
    if x.ndim != 4 or x.shape[2] < 1 or x.shape[3] < 1:
        raise ShapeError(f"bilinear_up2: expected non-empty 4-D input, got {x.shape}")
    uh = upsample_matrix(x.shape[2])
    uw = upsample_matrix(x.shape[3])
    out = np.einsum("ih,bchw,jw->bcij", uh, x.data, uw, optimize=True)
    return _make(out, (x,), lambda g: (np.einsum("ih,bcij,jw->bchw", uh, g, uw, optimize=True),))


# linear algebra ------------------------------------------------------------

def solve_small(a: Tensor, bm: Tensor, name: str = "solve_small") -> Tensor:
    """Solve ``A X = Bm`` for symmetric positive definite ``A`` (batched over leading axes).

    Uses a Cholesky factorisation. The adjoint is the closed form
    ``grad_Bm = A^{-1} G`` and ``grad_A = -sym(grad_Bm X^T)``.
    """
    if a.shape[-1] != a.shape[-2] or a.shape[:-1] != bm.shape[:-1]:
        raise ShapeError(f"{name}: incompatible shapes {a.shape} and {bm.shape}")
    if not (np.all(np.isfinite(a.data)) and np.all(np.isfinite(bm.data))):
        raise NumericalError(f"{name}: non-finite entries in Gram system")
    batch = a.shape[:-2]
    a2 = a.data.reshape((-1,) + a.shape[-2:])
    b2 = bm.data.reshape((-1,) + bm.shape[-2:])
    try:
        factors = [scipy.linalg.cho_factor(ai, lower=True) for ai in a2]
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"{name}: Cholesky factorisation failed ({exc})") from None
    x2 = np.stack([scipy.linalg.cho_solve(f, bi) for f, bi in zip(factors, b2)])
    out = x2.reshape(batch + x2.shape[-2:])

    def bw(g):
        g2 = g.reshape(x2.shape)
        gb = np.stack([scipy.linalg.cho_solve(f, gi) for f, gi in zip(factors, g2)])
        ga = -gb @ np.swapaxes(x2, -1, -2)
        ga = 0.5 * (ga + np.swapaxes(ga, -1, -2))
        return ga.reshape(a.shape), gb.reshape(bm.shape)

    return _make(out, (a, bm), bw)
