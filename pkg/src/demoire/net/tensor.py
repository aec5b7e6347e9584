"""Minimal reverse-mode automatic differentiation on numpy arrays.

Feature maps use NCHW layout. Every op checks that its forward result is
finite and raises :class:`~demoire.errors.NonFiniteValue` naming the op
otherwise.
"""

from __future__ import annotations

from contextlib import contextmanager
from functools import lru_cache

import numpy as np

from ..errors import NonFiniteValue, ShapeMismatch


_kink_trace: list | None = None


@contextmanager
def trace_kinks():
    """Record the branch pattern of every piecewise op evaluated inside the block.

    Finite-difference checks compare the patterns at ``x + h`` and ``x - h``
    to detect steps that straddle a kink.
    """
    global _kink_trace
    prev, _kink_trace = _kink_trace, []
    try:
        yield _kink_trace
    finally:
        _kink_trace = prev


def _note_branch(pattern: np.ndarray) -> None:
    if _kink_trace is not None:
        _kink_trace.append(np.packbits(pattern))


class Tensor:
    __slots__ = ("value", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(self, value, requires_grad: bool = False, _parents=(), _backward=None, op: str = "leaf"):
        self.value = np.asarray(value)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward
        self.op = op

    def __repr__(self):
        return f"Tensor(op={self.op}, shape={self.shape}, dtype={self.value.dtype})"

    @property
    def shape(self) -> tuple:
        return self.value.shape

    @property
    def dtype(self):
        return self.value.dtype

    def item(self) -> float:
        return float(self.value)

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self, grad=None) -> None:
        """Accumulate d(self)/d(leaf) into every leaf that requires gradients."""
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.value) if grad is None else np.asarray(grad, dtype=self.value.dtype)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
                if node._parents:
                    # interior grads are no longer needed once propagated
                    node.grad = None

    # operator sugar ---------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(as_tensor(other, self.dtype)))

    def __rsub__(self, other):
        return add(as_tensor(other, self.dtype), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    t.grad = g if t.grad is None else t.grad + g


def _make(value, parents, backward, op) -> Tensor:
    if not np.all(np.isfinite(value)):
        raise NonFiniteValue(f"{op} produced non-finite values")
    live = tuple(p for p in parents if p.requires_grad)
    if not live:
        return Tensor(value, op=op)
    return Tensor(value, True, live, backward, op)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# --------------------------------------------------------------------------
# elementwise
# --------------------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out_value = a.value + b.value

    def backward(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(g, b.shape))

    return _make(out_value, (a, b), backward, "add")


def neg(a) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        _accum(a, -g)

    return _make(-a.value, (a,), backward, "neg")


def mul(a, b) -> Tensor:
    a = as_tensor(a)
    b = as_tensor(b, a.dtype)

    def backward(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g * b.value, a.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(g * a.value, b.shape))

    return _make(a.value * b.value, (a, b), backward, "mul")


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    s = 0.5 * (1.0 + np.tanh(0.5 * a.value))

    def backward(g):
        _accum(a, g * s * (1.0 - s))

    return _make(s, (a,), backward, "sigmoid")


def leaky_relu(a, slope: float = 0.2) -> Tensor:
    a = as_tensor(a)
    pos = a.value > 0
    _note_branch(pos)
    factor = np.where(pos, 1.0, slope).astype(a.dtype)

    def backward(g):
        _accum(a, g * factor)

    return _make(a.value * factor, (a,), backward, "leaky_relu")


def relu(a) -> Tensor:
    a = as_tensor(a)
    pos = a.value > 0
    _note_branch(pos)

    def backward(g):
        _accum(a, g * pos)

    return _make(np.maximum(a.value, 0), (a,), backward, "relu")


def absolute(a) -> Tensor:
    a = as_tensor(a)
    sign = np.sign(a.value)
    _note_branch(sign > 0)

    def backward(g):
        _accum(a, g * sign)

    return _make(np.abs(a.value), (a,), backward, "abs")


def square(a) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        _accum(a, 2.0 * g * a.value)

    return _make(a.value * a.value, (a,), backward, "square")


def sqrt(a, eps: float = 0.0) -> Tensor:
    a = as_tensor(a)
    r = np.sqrt(a.value + eps)

    def backward(g):
        _accum(a, g * 0.5 / r)

    return _make(r, (a,), backward, "sqrt")


# --------------------------------------------------------------------------
# reductions and shape ops
# --------------------------------------------------------------------------


def mean(a) -> Tensor:
    a = as_tensor(a)
    n = a.value.size

    def backward(g):
        _accum(a, np.broadcast_to(g / n, a.shape).astype(a.dtype))

    return _make(np.asarray(a.value.mean()), (a,), backward, "mean")


def total(a) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        _accum(a, np.broadcast_to(g, a.shape).astype(a.dtype))

    return _make(np.asarray(a.value.sum()), (a,), backward, "sum")


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    old = a.shape

    def backward(g):
        _accum(a, g.reshape(old))

    return _make(a.value.reshape(shape), (a,), backward, "reshape")


def concat(tensors, axis: int = 1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, bounds[:-1], bounds[1:]):
            if t.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(lo, hi)
                _accum(t, g[tuple(idx)])

    return _make(np.concatenate([t.value for t in tensors], axis=axis), tuple(tensors), backward, "concat")


def channels(a, start: int, stop: int) -> Tensor:
    """Slice channels ``start:stop`` of an NCHW tensor."""
    a = as_tensor(a)

    def backward(g):
        full = np.zeros_like(a.value)
        full[:, start:stop] = g
        _accum(a, full)

    return _make(a.value[:, start:stop], (a,), backward, "channels")


def subsample2(a) -> Tensor:
    """Keep every second row and column (NCHW)."""
    a = as_tensor(a)

    def backward(g):
        full = np.zeros_like(a.value)
        full[:, :, ::2, ::2] = g
        _accum(a, full)

    return _make(np.ascontiguousarray(a.value[:, :, ::2, ::2]), (a,), backward, "subsample2")


def upsample_nearest(a, factor: int = 2) -> Tensor:
    a = as_tensor(a)
    n, c, h, w = a.shape

    def backward(g):
        _accum(a, g.reshape(n, c, h, factor, w, factor).sum(axis=(3, 5)))

    up = np.repeat(np.repeat(a.value, factor, axis=2), factor, axis=3)
    return _make(up, (a,), backward, "upsample_nearest")


def global_avg_pool(a) -> Tensor:
    """(N, C, H, W) -> (N, C) spatial mean."""
    a = as_tensor(a)
    n, c, h, w = a.shape

    def backward(g):
        _accum(a, np.broadcast_to(g[:, :, None, None] / (h * w), a.shape).astype(a.dtype))

    return _make(a.value.mean(axis=(2, 3)), (a,), backward, "global_avg_pool")


def linear(x, weight, bias=None) -> Tensor:
    """Fully connected layer: ``x @ weight.T + bias`` with ``x`` of shape (N, in)."""
    x, weight = as_tensor(x), as_tensor(weight)
    if x.shape[-1] != weight.shape[1]:
        raise ShapeMismatch(f"linear: input width {x.shape[-1]} vs weight {weight.shape}")
    out = x.value @ weight.value.T
    parents = [x, weight]
    if bias is not None:
        bias = as_tensor(bias)
        out = out + bias.value
        parents.append(bias)

    def backward(g):
        if x.requires_grad:
            _accum(x, g @ weight.value)
        if weight.requires_grad:
            _accum(weight, g.T @ x.value)
        if bias is not None and bias.requires_grad:
            _accum(bias, g.sum(axis=0))

    return _make(out, tuple(parents), backward, "linear")


def straight_through(surrogate, value) -> Tensor:
    """Forward ``value``; backward passes the gradient on to ``surrogate``."""
    surrogate = as_tensor(surrogate)
    value = np.asarray(value, dtype=surrogate.dtype).reshape(surrogate.shape)

    def backward(g):
        _accum(surrogate, g)

    return _make(value, (surrogate,), backward, "straight_through")


def stop_gradient(a) -> Tensor:
    return Tensor(as_tensor(a).value.copy(), op="stop_gradient")


# --------------------------------------------------------------------------
# padding and convolution
# --------------------------------------------------------------------------


@lru_cache(maxsize=256)
def _pad_matrix(n: int, before: int, after: int, mode: str) -> np.ndarray:
    """One-hot (n + before + after, n) matrix: padded = P @ original along one axis."""
    if mode == "zeros":
        idx = np.pad(np.arange(n), (before, after), mode="constant", constant_values=-1)
    else:
        idx = np.pad(np.arange(n), (before, after), mode=mode)
    p = np.zeros((len(idx), n))
    rows = np.flatnonzero(idx >= 0)
    p[rows, idx[rows]] = 1.0
    return p


def pad2d(a, ph: tuple[int, int], pw: tuple[int, int], mode: str = "reflect") -> Tensor:
    """Pad the two spatial axes; ``mode`` is reflect, symmetric or zeros."""
    a = as_tensor(a)
    if ph == (0, 0) and pw == (0, 0):
        return a
    _, _, h, w = a.shape
    if mode == "reflect" and (max(ph) >= h or max(pw) >= w):
        raise ShapeMismatch(f"reflect padding {ph, pw} too wide for {h}x{w}")
    mh = _pad_matrix(h, ph[0], ph[1], mode).astype(a.dtype)
    mw = _pad_matrix(w, pw[0], pw[1], mode).astype(a.dtype)
    if mode == "zeros":
        out = np.pad(a.value, ((0, 0), (0, 0), ph, pw))
    else:
        ih = np.pad(np.arange(h), ph, mode=mode)
        iw = np.pad(np.arange(w), pw, mode=mode)
        out = a.value[:, :, ih][:, :, :, iw]

    def backward(g):
        gw = g @ mw
        _accum(a, np.einsum("ij,ncjw->nciw", mh.T, gw, optimize=True))

    return _make(out, (a,), backward, "pad2d")


def _pair(v):
    return (v, v) if np.isscalar(v) else tuple(v)


def conv2d(x, weight, bias=None, stride=1, dilation=1, padding="same", pad_mode: str = "reflect") -> Tensor:
    """2-D cross-correlation.

    ``weight`` has shape (C_out, C_in, kh, kw). ``padding="same"`` pads
    ``dilation * (k - 1) / 2`` on each side, which preserves the size at
    stride 1 and halves even sizes at stride 2.
    """
    x, weight = as_tensor(x), as_tensor(weight)
    n, cin, _, _ = x.shape
    cout, wcin, kh, kw = weight.shape
    if cin != wcin:
        raise ShapeMismatch(f"conv2d: input has {cin} channels, weight expects {wcin}")
    sh, sw = _pair(stride)
    dh, dw = _pair(dilation)
    if padding == "same":
        padding = (dh * (kh - 1) // 2, dw * (kw - 1) // 2)
    ph, pw = _pair(padding)
    xp = pad2d(x, (ph, ph), (pw, pw), pad_mode)

    xv = np.ascontiguousarray(xp.value)
    hp, wp = xv.shape[2:]
    ho = (hp - dh * (kh - 1) - 1) // sh + 1
    wo = (wp - dw * (kw - 1) - 1) // sw + 1
    if ho < 1 or wo < 1:
        raise ShapeMismatch(f"conv2d: input {x.shape} too small for kernel {weight.shape}")
    s0, s1, s2, s3 = xv.strides
    view = np.lib.stride_tricks.as_strided(
        xv, shape=(n, cin, kh, kw, ho, wo), strides=(s0, s1, dh * s2, dw * s3, sh * s2, sw * s3), writeable=False
    )
    cols = view.reshape(n, cin * kh * kw, ho * wo)
    wm = weight.value.reshape(cout, -1)
    out = wm @ cols
    if bias is not None:
        bias = as_tensor(bias)
        out = out + bias.value.reshape(1, cout, 1)
    out = out.reshape(n, cout, ho, wo)
    parents = (xp, weight) if bias is None else (xp, weight, bias)

    def backward(g):
        g2 = g.reshape(n, cout, ho * wo)
        if weight.requires_grad:
            _accum(weight, np.tensordot(g2, cols, axes=([0, 2], [0, 2])).reshape(weight.shape))
        if bias is not None and bias.requires_grad:
            _accum(bias, g.sum(axis=(0, 2, 3)))
        if xp.requires_grad:
            dcols = (wm.T @ g2).reshape(n, cin, kh, kw, ho, wo)
            dx = np.zeros_like(xv)
            for i in range(kh):
                for j in range(kw):
                    dx[:, :, i * dh : i * dh + sh * (ho - 1) + 1 : sh, j * dw : j * dw + sw * (wo - 1) + 1 : sw] += dcols[
                        :, :, i, j
                    ]
            _accum(xp, dx)

    return _make(out, parents, backward, "conv2d")


def logit(a, eps: float = 1e-3) -> Tensor:
    """``log(p / (1 - p))`` of ``a`` clipped to [eps, 1 - eps]; zero gradient where clipped."""
    a = as_tensor(a)
    p = np.clip(a.value, eps, 1.0 - eps)
    inside = (a.value >= eps) & (a.value <= 1.0 - eps)
    _note_branch(inside)
    inside = inside.astype(a.dtype)

    def backward(g):
        _accum(a, g * inside / (p * (1.0 - p)))

    return _make(np.log(p / (1.0 - p)), (a,), backward, "logit")
