"""Differentiable operations over NHWC float blocks.

Every op takes and returns :class:`Tensor`.  Feature maps carry a leading
batch axis, so a single H x W x D map is an array of shape (N, H, W, D).
Nothing here mutates an input array.

Ops with a non-smooth switch (relu, max pooling, clamping) report their
switch pattern to an active :func:`record_switches` block, which lets the
gradient checker discard finite-difference probes that cross a kink.
"""
from __future__ import annotations

import contextlib
from typing import List, Optional, Sequence

import numpy as np

from .tensor import Tensor, grad_enabled


class ShapeError(ValueError):
    """Operand shapes are incompatible with the requested op."""


_switch_log: Optional[list] = None


@contextlib.contextmanager
def record_switches():
    global _switch_log
    prev = _switch_log
    log: list = []
    _switch_log = log
    try:
        yield log
    finally:
        _switch_log = prev


def _record(pattern: np.ndarray) -> None:
    if _switch_log is not None:
        _switch_log.append(pattern.copy())


def _node(data: np.ndarray, parents: Sequence[Tensor], backward, op: str) -> Tensor:
    live = tuple(parents)
    requires = grad_enabled() and any(p.requires_grad for p in live)
    if not requires:
        return Tensor(data, dtype=data.dtype, op=op)
    return Tensor(data, requires_grad=True, _parents=live, _backward=backward, op=op, dtype=data.dtype)


# ---------------------------------------------------------------- elementwise

def _check_broadcast(a: Tensor, b: Tensor) -> None:
    if a.ndim != b.ndim:
        raise ShapeError(f"rank mismatch {a.shape} vs {b.shape}")
    for da, db in zip(a.shape, b.shape):
        if da != db and da != 1 and db != 1:
            raise ShapeError(f"cannot broadcast {a.shape} with {b.shape}")


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    if g.shape == tuple(shape):
        return g
    axes = tuple(i for i, (gs, s) in enumerate(zip(g.shape, shape)) if s == 1 and gs != 1)
    return g.sum(axis=axes, keepdims=True).reshape(shape)


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b)
    out = a.data + b.data
    return _node(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)), "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b)
    out = a.data - b.data
    return _node(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)), "sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b)
    out = a.data * b.data
    return _node(
        out,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
        "mul",
    )


def scale(x: Tensor, c: float) -> Tensor:
    c = x.data.dtype.type(c)
    return _node(x.data * c, (x,), lambda g: (g * c,), "scale")


def add_scalar(x: Tensor, c: float) -> Tensor:
    return _node(x.data + x.data.dtype.type(c), (x,), lambda g: (g,), "add_scalar")


def sigmoid(x: Tensor) -> Tensor:
    # split by sign so neither branch overflows
    d = x.data
    e = np.exp(-np.abs(d))
    out = np.where(d >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(d.dtype)
    return _node(out, (x,), lambda g: (g * out * (1 - out),), "sigmoid")


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    _record(mask)
    out = np.where(mask, x.data, 0).astype(x.data.dtype)
    return _node(out, (x,), lambda g: (g * mask,), "relu")


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return _node(out, (x,), lambda g: (g * out,), "exp")


def clamp_max(x: Tensor, limit: float) -> Tensor:
    """min(x, limit); the gradient passes straight through where clamped."""
    over = x.data > limit
    _record(over)
    out = np.minimum(x.data, x.data.dtype.type(limit))
    return _node(out, (x,), lambda g: (g,), "clamp_max")


# ---------------------------------------------------------------- reductions

def sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    out = np.asarray(x.data.sum(axis=axis, keepdims=keepdims))

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).astype(x.data.dtype),)

    return _node(out, (x,), bw, "sum")


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    n = x.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return scale(sum(x, axis=axis, keepdims=keepdims), 1.0 / float(n))


def _reduce(x: Tensor, axis: int, mode: str) -> Tensor:
    # reduce one axis of x, keeping it as extent 1
    if mode == "avg":
        n = x.shape[axis]
        out = x.data.mean(axis=axis, keepdims=True)

        def bw(g):
            return (np.broadcast_to(g / x.data.dtype.type(n), x.shape).astype(x.data.dtype),)

        return _node(out, (x,), bw, "avg_pool")
    if mode == "max":
        idx = np.argmax(x.data, axis=axis)  # first maximal element on ties
        idx = np.expand_dims(idx, axis)
        _record(idx)
        out = np.take_along_axis(x.data, idx, axis=axis)

        def bw(g):
            gx = np.zeros_like(x.data)
            np.put_along_axis(gx, idx, g, axis=axis)
            return (gx,)

        return _node(out, (x,), bw, "max_pool")
    raise ValueError(f"unknown pooling mode {mode!r}")


def pool_spatial(x: Tensor, mode: str) -> Tensor:
    """Per-channel mean or max over all H*W positions: (N,H,W,D) -> (N,1,1,D)."""
    if x.ndim != 4:
        raise ShapeError(f"pool_spatial expects (N,H,W,D), got {x.shape}")
    n, h, w, d = x.shape
    flat = reshape(x, (n, h * w, d))
    return reshape(_reduce(flat, 1, mode), (n, 1, 1, d))


def pool_channel(x: Tensor, mode: str) -> Tensor:
    """Per-position mean or max over channels: (N,H,W,D) -> (N,H,W,1)."""
    if x.ndim != 4:
        raise ShapeError(f"pool_channel expects (N,H,W,D), got {x.shape}")
    return _reduce(x, 3, mode)


# ---------------------------------------------------------------- structure

def reshape(x: Tensor, shape) -> Tensor:
    src = x.shape
    out = x.data.reshape(shape)
    return _node(out, (x,), lambda g: (g.reshape(src),), "reshape")


def concat(xs: List[Tensor], axis: int) -> Tensor:
    if not xs:
        raise ShapeError("concat of nothing")
    ref = xs[0].shape
    for t in xs[1:]:
        if t.ndim != len(ref) or any(a != b for i, (a, b) in enumerate(zip(t.shape, ref)) if i != axis):
            raise ShapeError(f"concat along {axis}: {t.shape} vs {ref}")
    out = np.concatenate([t.data for t in xs], axis=axis)
    bounds = np.cumsum([t.shape[axis] for t in xs])[:-1]

    def bw(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _node(out, tuple(xs), bw, "concat")


def slice_axis(x: Tensor, axis: int, start: int, stop: int) -> Tensor:
    if not 0 <= start < stop <= x.shape[axis]:
        raise ShapeError(f"slice [{start}:{stop}] out of range for axis {axis} of {x.shape}")
    index = [slice(None)] * x.ndim
    index[axis] = slice(start, stop)
    index = tuple(index)
    out = x.data[index].copy()

    def bw(g):
        gx = np.zeros_like(x.data)
        gx[index] = g
        return (gx,)

    return _node(out, (x,), bw, "slice")


def take_rows(x: Tensor, idx) -> Tensor:
    """Gather rows ``x[idx]`` of a 2-d tensor; repeated rows accumulate grads."""
    idx = np.asarray(idx, dtype=np.int64)
    out = x.data[idx]

    def bw(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, idx, g)
        return (gx,)

    return _node(out, (x,), bw, "take_rows")


# ---------------------------------------------------------------- linear maps

def dense(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """x @ w + b for x of shape (N, n), w (n, m), b (m,)."""
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[0]:
        raise ShapeError(f"dense: x {x.shape} @ w {w.shape}")
    if b.shape != (w.shape[1],):
        raise ShapeError(f"dense: bias {b.shape} for output width {w.shape[1]}")
    out = x.data @ w.data + b.data

    def bw(g):
        return (g @ w.data.T, x.data.T @ g, g.sum(axis=0))

    return _node(out, (x, w, b), bw, "dense")


def _out_extent(n: int, k: int, stride: int, padding: str) -> int:
    if padding == "same":
        return -(-n // stride)
    return (n - k) // stride + 1


def conv2d(x: Tensor, w: Tensor, b: Tensor, padding: str = "same", stride: int = 1) -> Tensor:
    """2-d cross-correlation of (N,H,W,Cin) with a (Kh,Kw,Cin,Cout) kernel.

    ``same`` pads with zeros by (K-1)/2 on each side, so odd kernels are
    required and the output extent is ceil(H/stride).  ``valid`` applies no
    padding.  Computed as one im2col matmul; the input gradient is scattered
    back kernel offset by kernel offset in row-major order.
    """
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError(f"conv2d: x {x.shape}, w {w.shape}")
    n, h, wd, cin = x.shape
    kh, kw, wcin, cout = w.shape
    if wcin != cin:
        raise ShapeError(f"conv2d: input has {cin} channels, kernel expects {wcin}")
    if b.shape != (cout,):
        raise ShapeError(f"conv2d: bias {b.shape} for {cout} output channels")
    if padding not in ("same", "valid"):
        raise ValueError(f"unknown padding {padding!r}")
    if padding == "same":
        if kh % 2 == 0 or kw % 2 == 0:
            raise ShapeError("same padding needs odd kernel extents")
        ph, pw = kh // 2, kw // 2
    else:
        ph = pw = 0
        if kh > h or kw > wd:
            raise ShapeError(f"valid conv: kernel {kh}x{kw} larger than input {h}x{wd}")
    oh = _out_extent(h, kh, stride, padding)
    ow = _out_extent(wd, kw, stride, padding)
    xp = np.pad(x.data, ((0, 0), (ph, ph), (pw, pw), (0, 0))) if (ph or pw) else x.data

    def window(arr, i, j):
        return arr[:, i : i + stride * (oh - 1) + 1 : stride, j : j + stride * (ow - 1) + 1 : stride, :]

    # im2col: columns ordered (kernel row, kernel col, input channel), matching w.reshape
    cols = np.empty((n, oh, ow, kh, kw, cin), dtype=x.data.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, :, i, j, :] = window(xp, i, j)
    cols = cols.reshape(n * oh * ow, kh * kw * cin)
    w2 = w.data.reshape(kh * kw * cin, cout)
    out = (cols @ w2 + b.data).reshape(n, oh, ow, cout)

    def bw(g):
        g2 = g.reshape(-1, cout)
        gw = (cols.T @ g2).reshape(w.shape)
        gcols = (g2 @ w2.T).reshape(n, oh, ow, kh, kw, cin)
        gxp = np.zeros_like(xp)
        for i in range(kh):
            for j in range(kw):
                window(gxp, i, j)[...] += gcols[:, :, :, i, j, :]
        gx = gxp[:, ph : ph + h, pw : pw + wd, :] if (ph or pw) else gxp
        return (gx, gw, g2.sum(axis=0))

    return _node(out, (x, w, b), bw, "conv2d")


# ---------------------------------------------------------------- losses

def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean of -log softmax(logits)[i, labels[i]] over the batch."""
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeError(f"cross_entropy: logits {logits.shape}, labels {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= logits.shape[1]):
        raise IndexError(f"label out of range [0, {logits.shape[1]})")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - logsum
    rows = np.arange(labels.size)
    n = logits.data.dtype.type(labels.size)
    out = np.asarray(-logp[rows, labels].sum() / n, dtype=logits.data.dtype)

    def bw(g):
        p = np.exp(logp)
        p[rows, labels] -= 1
        return (p * (g / n),)

    return _node(out, (logits,), bw, "cross_entropy")
