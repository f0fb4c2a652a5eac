"""Tape-based reverse-mode automatic differentiation.

A deliberately small primitive set: exactly the operations the encoders,
heads, and losses need.  Heavy forward/backward math is delegated to the
kernel lanes (see instasim.kernels); cheap elementwise arithmetic runs
directly on NumPy.

Tensors hold NumPy arrays of a single float dtype (float32 in production,
float64 for tight gradient checking).  The graph is built eagerly; calling
``backward()`` on a scalar tensor accumulates ``.grad`` on every reachable
tensor with ``requires_grad=True``.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Sequence

import numpy as np

from .. import kernels

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the context (inference/rollouts)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_backward", "_parents")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._backward: Callable[[np.ndarray], None] | None = None
        self._parents: tuple[Tensor, ...] = ()

    # -- basic introspection --

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, grad={self.requires_grad})"

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self) -> None:
        self.grad = None

    # -- operator sugar --

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(as_tensor(other, self.dtype), self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return neg(self)

    def backward(self) -> None:
        """Reverse pass from a scalar tensor."""
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar tensor")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    arr = np.asarray(x, dtype=dtype)
    return Tensor(arr)


def _accum(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad and t._backward is None:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _make(data: np.ndarray, parents: Sequence[Tensor], backward) -> Tensor:
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad or p._backward is not None for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a gradient back down to the shape it was broadcast from."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, s) in enumerate(zip(g.shape, shape)) if s == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# -- elementwise arithmetic ----------------------------------------------------

def add(a, b) -> Tensor:
    a = as_tensor(a)
    b = as_tensor(b, a.dtype)

    def bwd(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(g, b.data.shape))

    return _make(a.data + b.data, (a, b), bwd)


def sub(a, b) -> Tensor:
    a = as_tensor(a)
    b = as_tensor(b, a.dtype)

    def bwd(g):
        _accum(a, _unbroadcast(g, a.data.shape))
        _accum(b, _unbroadcast(-g, b.data.shape))

    return _make(a.data - b.data, (a, b), bwd)


def mul(a, b) -> Tensor:
    a = as_tensor(a)
    b = as_tensor(b, a.dtype)

    def bwd(g):
        _accum(a, _unbroadcast(g * b.data, a.data.shape))
        _accum(b, _unbroadcast(g * a.data, b.data.shape))

    return _make(a.data * b.data, (a, b), bwd)


def neg(a: Tensor) -> Tensor:
    def bwd(g):
        _accum(a, -g)

    return _make(-a.data, (a,), bwd)


def exp(a: Tensor) -> Tensor:
    y = np.exp(a.data)

    def bwd(g):
        _accum(a, g * y)

    return _make(y, (a,), bwd)


def log(a: Tensor) -> Tensor:
    def bwd(g):
        _accum(a, g / a.data)

    return _make(np.log(a.data), (a,), bwd)


def square(a: Tensor) -> Tensor:
    def bwd(g):
        _accum(a, g * (2 * a.data))

    return _make(np.square(a.data), (a,), bwd)


def sigmoid(a: Tensor) -> Tensor:
    y = 1.0 / (1.0 + np.exp(-a.data))

    def bwd(g):
        _accum(a, g * y * (1 - y))

    return _make(y, (a,), bwd)


def softplus(a: Tensor) -> Tensor:
    """log(1 + exp(x)), computed stably."""
    x = a.data
    y = np.maximum(x, 0) + np.log1p(np.exp(-np.abs(x)))

    def bwd(g):
        _accum(a, g / (1.0 + np.exp(-x)))

    return _make(y, (a,), bwd)


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp values; gradient passes through the interior, zero outside."""
    mask = (a.data >= lo) & (a.data <= hi)

    def bwd(g):
        _accum(a, np.where(mask, g, 0))

    return _make(np.clip(a.data, lo, hi), (a,), bwd)


# -- reductions and reshaping ---------------------------------------------------

def sum_all(a: Tensor) -> Tensor:
    def bwd(g):
        _accum(a, np.broadcast_to(g, a.data.shape).copy())

    return _make(a.data.sum(), (a,), bwd)


def mean_all(a: Tensor) -> Tensor:
    n = a.data.size

    def bwd(g):
        _accum(a, np.broadcast_to(g / n, a.data.shape).copy())

    return _make(a.data.mean(), (a,), bwd)


def sum_axis(a: Tensor, axis: int) -> Tensor:
    def bwd(g):
        _accum(a, np.broadcast_to(np.expand_dims(g, axis), a.data.shape).copy())

    return _make(a.data.sum(axis=axis), (a,), bwd)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        for t, start, stop in zip(tensors, offsets[:-1], offsets[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(start, stop)
            _accum(t, np.ascontiguousarray(g[tuple(sl)]))

    return _make(np.concatenate([t.data for t in tensors], axis=axis), tensors, bwd)


def slice_cols(a: Tensor, start: int, stop: int) -> Tensor:
    def bwd(g):
        full = np.zeros_like(a.data)
        full[..., start:stop] = g
        _accum(a, full)

    return _make(np.ascontiguousarray(a.data[..., start:stop]), (a,), bwd)


# -- kernel-backed layers --------------------------------------------------------

def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """y = x @ w + b with exact transposed-product gradients."""
    if x.data.shape[-1] != w.data.shape[0] or w.data.shape[1] != b.data.shape[0]:
        raise ValueError(
            f"linear shape mismatch: x {x.data.shape}, w {w.data.shape}, b {b.data.shape}")
    y = kernels.linear_fwd(x.data, w.data, b.data)

    def bwd(g):
        dx, dw, db = kernels.linear_bwd(x.data, w.data, g)
        _accum(x, dx)
        _accum(w, dw)
        _accum(b, db)

    return _make(y, (x, w, b), bwd)


def matmul(x: Tensor, w: Tensor) -> Tensor:
    """y = x @ w (bias-free linear)."""
    if x.data.shape[-1] != w.data.shape[0]:
        raise ValueError(f"matmul shape mismatch: x {x.data.shape}, w {w.data.shape}")

    def bwd(g):
        _accum(x, g @ w.data.T)
        _accum(w, x.data.T @ g)

    return _make(x.data @ w.data, (x, w), bwd)


def relu(x: Tensor) -> Tensor:
    def bwd(g):
        _accum(x, kernels.relu_bwd(x.data, g))

    return _make(kernels.relu_fwd(x.data), (x,), bwd)


def layer_norm(x: Tensor, scale: Tensor, shift: Tensor, eps: float = 1e-5) -> Tensor:
    """Per-row normalization over the feature axis, then affine."""
    if x.data.shape[-1] < 2:
        raise ValueError("layer_norm needs a feature dimension of at least 2")
    y, mean, rstd = kernels.layernorm_fwd(x.data, scale.data, shift.data, eps)

    def bwd(g):
        dx, dscale, dshift = kernels.layernorm_bwd(x.data, scale.data, mean, rstd, g)
        _accum(x, dx)
        _accum(scale, dscale)
        _accum(shift, dshift)

    return _make(y, (x, scale, shift), bwd)


def film(z: Tensor, scale: Tensor, shift: Tensor) -> Tensor:
    """Feature-wise linear modulation: scale * z + shift, elementwise."""
    if not (z.data.shape == scale.data.shape == shift.data.shape):
        raise ValueError(
            f"film shape mismatch: z {z.data.shape}, scale {scale.data.shape}, "
            f"shift {shift.data.shape}")

    def bwd(g):
        _accum(z, g * scale.data)
        _accum(scale, g * z.data)
        _accum(shift, g)

    return _make(scale.data * z.data + shift.data, (z, scale, shift), bwd)


def gather_rows(x: Tensor, idx: np.ndarray) -> Tensor:
    n_rows = x.data.shape[0]

    def bwd(g):
        _accum(x, kernels.scatter_add_rows(g, idx, n_rows))

    return _make(kernels.gather_rows(x.data, idx), (x,), bwd)


def segment_max(x: Tensor, seg: np.ndarray) -> tuple[Tensor, np.ndarray]:
    """Per-segment elementwise max; gradient flows to argmax rows only."""
    if len(seg) < 2 or seg[-1] != x.data.shape[0]:
        raise ValueError("bad segment offsets for segment_max")
    y, argmax = kernels.segment_max_fwd(x.data, seg)
    n_rows = x.data.shape[0]

    def bwd(g):
        _accum(x, kernels.segment_max_bwd(argmax, g, n_rows))

    return _make(y, (x,), bwd), argmax


def segment_attention(q: Tensor, k: Tensor, v: Tensor, seg: np.ndarray,
                      n_heads: int) -> Tensor:
    """Scaled dot-product cross-attention, one query per KV segment."""
    dim = q.data.shape[-1]
    if dim % n_heads:
        raise ValueError(f"hidden dim {dim} not divisible by {n_heads} heads")
    if len(seg) != q.data.shape[0] + 1:
        raise ValueError("segment offsets must have one entry per query plus one")
    if np.any(np.diff(seg) < 1):
        raise ValueError("attention KV segments must be non-empty")
    out, weights = kernels.attention_fwd(q.data, k.data, v.data, seg, n_heads)

    def bwd(g):
        dq, dk, dv = kernels.attention_bwd(q.data, k.data, v.data, seg, n_heads,
                                           weights, g)
        _accum(q, dq)
        _accum(k, dk)
        _accum(v, dv)

    return _make(out, (q, k, v), bwd)
