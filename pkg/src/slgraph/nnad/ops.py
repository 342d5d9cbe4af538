"""Differentiable primitives on :class:`Tensor`.

Each op computes its forward value with numpy and hands a closure mapping the
output gradient to input gradients to :func:`make`. Reductions that scatter
into rows use a sparse incidence matrix whose row entries are stored in edge
order, so summation order is fixed.
"""

from __future__ import annotations

import itertools
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .tensor import Tensor, as_tensor, make


def _data(x):
    return x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    lead = g.ndim - len(shape)
    if lead:
        g = g.sum(axis=tuple(range(lead)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------- elementwise

def add(a, b) -> Tensor:
    x, y = _data(a), _data(b)
    return make(x + y, (a, b), lambda g: (_unbroadcast(g, x.shape), _unbroadcast(g, y.shape)))


def sub(a, b) -> Tensor:
    x, y = _data(a), _data(b)
    return make(x - y, (a, b), lambda g: (_unbroadcast(g, x.shape), _unbroadcast(-g, y.shape)))


def mul(a, b) -> Tensor:
    x, y = _data(a), _data(b)
    return make(x * y, (a, b),
                lambda g: (_unbroadcast(g * y, x.shape), _unbroadcast(g * x, y.shape)))


def div(a, b) -> Tensor:
    x, y = _data(a), _data(b)
    out = x / y
    return make(out, (a, b),
                lambda g: (_unbroadcast(g / y, x.shape), _unbroadcast(-g * out / y, y.shape)))


def neg(a) -> Tensor:
    return make(-_data(a), (a,), lambda g: (-g,))


def power(a, p: float) -> Tensor:
    x = _data(a)
    return make(x ** p, (a,), lambda g: (g * p * x ** (p - 1),))


def elu(a, alpha: float = 1.0) -> Tensor:
    x = _data(a)
    neg_part = alpha * np.expm1(np.minimum(x, 0.0))
    out = np.where(x > 0, x, neg_part)
    return make(out, (a,), lambda g: (g * np.where(x > 0, 1.0, neg_part + alpha),))


def leaky_relu(a, slope: float = 0.2) -> Tensor:
    x = _data(a)
    scale = np.where(x > 0, 1.0, slope)
    return make(x * scale, (a,), lambda g: (g * scale,))


# ---------------------------------------------------------------- shape ops

def reshape(a, shape) -> Tensor:
    x = _data(a)
    return make(x.reshape(shape), (a,), lambda g: (g.reshape(x.shape),))


def transpose(a, axes=None) -> Tensor:
    x = _data(a)
    axes = tuple(range(x.ndim))[::-1] if axes is None else tuple(axes)
    inv = tuple(np.argsort(axes))
    return make(np.transpose(x, axes), (a,), lambda g: (np.transpose(g, inv),))


def concat(xs, axis: int = -1) -> Tensor:
    arrays = [_data(x) for x in xs]
    axis = axis % arrays[0].ndim
    bounds = np.cumsum([0] + [x.shape[axis] for x in arrays])

    def bwd(g):
        out = []
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            out.append(g[tuple(idx)])
        return tuple(out)

    return make(np.concatenate(arrays, axis=axis), tuple(xs), bwd)


def sum(a, axis=None) -> Tensor:  # noqa: A001 - mirrors numpy
    x = _data(a)
    out = np.sum(x, axis=axis)

    def bwd(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape),)

    return make(out, (a,), bwd)


def mean(a) -> Tensor:
    x = _data(a)
    n = x.size
    return make(np.mean(x), (a,), lambda g: (np.broadcast_to(g / n, x.shape),))


def stop_gradient(a) -> Tensor:
    return Tensor(_data(a))


# ---------------------------------------------------------------- dense layers

def matmul(a, b) -> Tensor:
    x, y = _data(a), _data(b)
    return make(x @ y, (a, b), lambda g: (g @ y.T, x.T @ g))


def linear(x, W, b=None) -> Tensor:
    """x @ W.T + b with W shaped (out, in)."""
    xd, Wd = _data(x), _data(W)
    out = xd @ Wd.T
    if b is None:
        return make(out, (x, W), lambda g: (g @ Wd, g.T @ xd))
    out = out + _data(b)
    return make(out, (x, W, b), lambda g: (g @ Wd, g.T @ xd, g.sum(axis=0)))


def mse(pred, target) -> Tensor:
    p, t = _data(pred), _data(target)
    r = p - t
    n = r.size
    return make(np.mean(r * r), (pred, target),
                lambda g: (g * 2.0 * r / n, -g * 2.0 * r / n))


# ---------------------------------------------------------------- convolution

def _pad_axis(a: np.ndarray, axis: int, p: int, periodic: bool) -> np.ndarray:
    width = [(0, 0)] * a.ndim
    width[axis] = (p, p)
    return np.pad(a, width, mode="wrap" if periodic else "constant")


def _unpad_axis(g: np.ndarray, axis: int, p: int, periodic: bool) -> np.ndarray:
    """Adjoint of :func:`_pad_axis`."""
    n = g.shape[axis] - 2 * p
    take = lambda lo, hi: g[(slice(None),) * axis + (slice(lo, hi),)]  # noqa: E731
    core = take(p, p + n).copy()
    if periodic and p:
        head = (slice(None),) * axis
        core[head + (slice(n - p, n),)] += take(0, p)
        core[head + (slice(0, p),)] += take(p + n, 2 * p + n)
    return core


def conv(x, w, b=None, periodic=True) -> Tensor:
    """Same-size cross-correlation over the trailing 1 or 2 spatial axes.

    ``x`` is (C_in, *S) or (B, C_in, *S); ``w`` is (C_out, C_in, *K) with odd K.
    ``periodic`` selects circular (True) or zero padding per spatial axis.
    """
    xd, wd = _data(x), _data(w)
    nd = wd.ndim - 2
    if nd not in (1, 2):
        raise ValueError("only 1D and 2D convolutions are supported")
    batched = xd.ndim == nd + 2
    xb = xd if batched else xd[None]
    if xb.ndim != nd + 2 or xb.shape[1] != wd.shape[1]:
        raise ValueError(f"conv shape mismatch: input {xd.shape}, kernel {wd.shape}")
    ks = wd.shape[2:]
    if any(k % 2 == 0 for k in ks):
        raise ValueError("kernel sizes must be odd")
    per = (periodic,) * nd if isinstance(periodic, (bool, np.bool_)) else tuple(periodic)
    B, C = xb.shape[:2]
    S = xb.shape[2:]
    xp = xb
    for ax in range(nd):
        xp = _pad_axis(xp, 2 + ax, ks[ax] // 2, per[ax])
    offsets = list(itertools.product(*[range(k) for k in ks]))
    # cols: (C, *K, B, *S)
    cols = np.empty((C, len(offsets), B) + S)
    for r, off in enumerate(offsets):
        sl = (slice(None), slice(None)) + tuple(slice(o, o + s) for o, s in zip(off, S))
        cols[:, r] = np.moveaxis(xp[sl], 0, 1)
    cols2 = cols.reshape(C * len(offsets), -1)
    W2 = wd.reshape(wd.shape[0], -1)
    out = (W2 @ cols2).reshape((wd.shape[0], B) + S)
    out = np.moveaxis(out, 0, 1)
    if b is not None:
        out = out + _data(b).reshape((1, -1) + (1,) * nd)
    if not batched:
        out = out[0]

    def bwd(g):
        gb = g if batched else g[None]
        G = np.moveaxis(gb, 1, 0).reshape(wd.shape[0], -1)
        gw = (G @ cols2.T).reshape(wd.shape)
        dcols = (W2.T @ G).reshape(cols.shape)
        dxp = np.zeros(xp.shape)
        for r, off in enumerate(offsets):
            sl = (slice(None), slice(None)) + tuple(slice(o, o + s) for o, s in zip(off, S))
            dxp[sl] += np.moveaxis(dcols[:, r], 0, 1)
        for ax in reversed(range(nd)):
            dxp = _unpad_axis(dxp, 2 + ax, ks[ax] // 2, per[ax])
        gx = dxp if batched else dxp[0]
        if b is None:
            return gx, gw
        return gx, gw, gb.sum(axis=(0,) + tuple(range(2, 2 + nd)))

    parents = (x, w) if b is None else (x, w, b)
    return make(out, parents, bwd)


def conv1d_circular(x, w, b=None) -> Tensor:
    return conv(x, w, b, periodic=True)


def conv2d_circular(x, w, b=None, periodic=(True, True)) -> Tensor:
    return conv(x, w, b, periodic=periodic)


# ---------------------------------------------------------------- graph ops

class SegmentIndex:
    """Row index array with a cached incidence matrix for scatter sums."""

    def __init__(self, index, n: int):
        index = np.asarray(index, dtype=np.int64).reshape(-1)
        if index.size and (index.min() < 0 or index.max() >= n):
            raise IndexError(f"index out of range for {n} rows")
        self.index = index
        self.n = int(n)

    def __len__(self):
        return self.index.size

    @cached_property
    def matrix(self) -> sp.csr_matrix:
        e = self.index.size
        return sp.csr_matrix((np.ones(e), (self.index, np.arange(e))), shape=(self.n, e))

    @cached_property
    def counts(self) -> np.ndarray:
        return np.bincount(self.index, minlength=self.n)

    @cached_property
    def is_sorted(self) -> bool:
        return bool(np.all(np.diff(self.index) >= 0))

    def scatter(self, values: np.ndarray) -> np.ndarray:
        if values.ndim == 1:
            return self.matrix @ values
        flat = values.reshape(values.shape[0], -1)
        return np.asarray(self.matrix @ flat).reshape((self.n,) + values.shape[1:])

    def segment_max(self, values: np.ndarray) -> np.ndarray:
        out = np.full((self.n,) + values.shape[1:], -np.inf)
        if self.is_sorted and np.all(self.counts > 0):
            starts = np.concatenate([[0], np.cumsum(self.counts)[:-1]])
            return np.maximum.reduceat(values, starts, axis=0)
        np.maximum.at(out, self.index, values)
        return out


def _as_index(index, n: int | None) -> SegmentIndex:
    if isinstance(index, SegmentIndex):
        return index
    if n is None:
        raise ValueError("number of rows required for a raw index array")
    return SegmentIndex(index, n)


def gather(x, index) -> Tensor:
    """Copy rows ``x[index]`` (axis 0)."""
    xd = _data(x)
    idx = _as_index(index, xd.shape[0])
    if idx.n != xd.shape[0]:
        raise ValueError("index built for a different row count")
    return make(xd[idx.index], (x,), lambda g: (idx.scatter(g),))


def scatter_sum(x, index, n: int | None = None) -> Tensor:
    """Sum rows of ``x`` into ``n`` output rows by ``index`` in edge order."""
    xd = _data(x)
    idx = _as_index(index, n)
    if len(idx) != xd.shape[0]:
        raise ValueError("index length must match the number of rows")
    return make(idx.scatter(xd), (x,), lambda g: (g[idx.index],))


def segment_softmax(scores, index, n: int | None = None) -> Tensor:
    """Softmax over rows sharing a segment id, separately per trailing column."""
    s = _data(scores)
    idx = _as_index(index, n)
    if len(idx) != s.shape[0]:
        raise ValueError("index length must match the number of scores")
    if np.any(idx.counts == 0):
        raise ValueError("empty segment in softmax")
    m = idx.segment_max(s)
    e = np.exp(s - m[idx.index])
    y = e / idx.scatter(e)[idx.index]
    return make(y, (scores,), lambda g: (y * (g - idx.scatter(y * g)[idx.index]),))


__all__ = [
    "SegmentIndex", "add", "as_tensor", "concat", "conv", "conv1d_circular",
    "conv2d_circular", "div", "elu", "gather", "leaky_relu", "linear", "matmul",
    "mean", "mse", "mul", "neg", "power", "reshape", "scatter_sum", "segment_softmax",
    "stop_gradient", "sum", "transpose",
]
