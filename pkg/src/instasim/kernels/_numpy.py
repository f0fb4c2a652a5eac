"""Pure-NumPy kernel lane.

Reference implementation of the hot numeric kernels.  Works with any float
dtype (the compiled lane is float32-only); ragged "segment" operations use
``np.ufunc.reduceat`` over row-offset arrays instead of Python loops.

Segment conventions: a batch of B variable-length row groups inside a single
(T, D) matrix is described by an int64 offset array ``seg`` of length B + 1
with ``seg[0] == 0``, ``seg[-1] == T`` and strictly increasing entries
(segments are never empty).
"""

from __future__ import annotations

import numpy as np

NAME = "numpy"


def _repeat_index(seg: np.ndarray) -> np.ndarray:
    """Row -> segment index map for a (B+1,) offset array."""
    sizes = np.diff(seg)
    return np.repeat(np.arange(len(seg) - 1, dtype=np.int64), sizes)


# -- dense layers ------------------------------------------------------------

def linear_fwd(x, w, b):
    """y = x @ w + b for x (B, I), w (I, O), b (O,)."""
    return x @ w + b


def linear_bwd(x, w, dy):
    dx = dy @ w.T
    dw = x.T @ dy
    db = dy.sum(axis=0)
    return dx, dw, db


def relu_fwd(x):
    return np.maximum(x, 0)


def relu_bwd(x, dy):
    return np.where(x > 0, dy, 0)


def layernorm_fwd(x, gamma, beta, eps):
    """Per-row layer norm over the last axis.

    Returns (y, mean, rstd); mean/rstd are kept for the backward pass.
    """
    mean = x.mean(axis=-1, keepdims=True)
    var = np.square(x - mean).mean(axis=-1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    y = (x - mean) * rstd * gamma + beta
    return y, mean, rstd


def layernorm_bwd(x, gamma, mean, rstd, dy):
    d = x.shape[-1]
    xhat = (x - mean) * rstd
    dgamma = (dy * xhat).sum(axis=0)
    dbeta = dy.sum(axis=0)
    dxhat = dy * gamma
    dx = rstd * (dxhat
                 - dxhat.mean(axis=-1, keepdims=True)
                 - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True) / d)
    return dx, dgamma, dbeta


# -- gather / scatter --------------------------------------------------------

def gather_rows(x, idx):
    return x[idx]


def scatter_add_rows(dy, idx, n_rows):
    """Transpose of gather_rows: sum dy rows into their source rows.

    Sort-based segmented reduction; much faster than np.add.at for wide rows.
    """
    out = np.zeros((n_rows,) + dy.shape[1:], dtype=dy.dtype)
    if len(idx) == 0:
        return out
    order = np.argsort(idx, kind="stable")
    sorted_idx = idx[order]
    starts = np.flatnonzero(np.r_[True, sorted_idx[1:] != sorted_idx[:-1]])
    sums = np.add.reduceat(dy[order], starts, axis=0)
    out[sorted_idx[starts]] = sums
    return out


# -- ragged segment reductions ------------------------------------------------

def segment_max_fwd(x, seg):
    """Element-wise max over each row segment.

    Returns (y, argmax) where argmax holds, per output element, the row index
    in x that supplied the maximum (ties resolved to the lowest row index).
    """
    n = len(seg) - 1
    t, d = x.shape
    if n == 0:
        return np.empty((0, d), dtype=x.dtype), np.empty((0, d), dtype=np.int64)
    y = np.maximum.reduceat(x, seg[:-1], axis=0)
    rep = _repeat_index(seg)
    rows = np.arange(t, dtype=np.int64)[:, None]
    # Exact comparison is safe: y entries are copies of x entries.
    candidates = np.where(x == y[rep], rows, t)
    argmax = np.minimum.reduceat(candidates, seg[:-1], axis=0)
    return y, argmax


def segment_max_bwd(argmax, dy, n_rows):
    d = dy.shape[1]
    dx = np.zeros((n_rows, d), dtype=dy.dtype)
    flat = argmax.ravel() * d + np.tile(np.arange(d, dtype=np.int64), argmax.shape[0])
    np.add.at(dx.ravel(), flat, dy.ravel())
    return dx


# -- segmented multi-head cross-attention --------------------------------------

def attention_fwd(q, k, v, seg, n_heads):
    """One query per segment attending over its own KV rows.

    Args:
        q: (B, D) queries, one per segment.
        k, v: (T, D) keys/values, rows grouped by seg.
        seg: (B+1,) int64 offsets.
        n_heads: D must be divisible by n_heads.

    Returns:
        (out, weights): out (B, D); weights (T, n_heads) softmax attention,
        kept for the backward pass.
    """
    b, dim = q.shape
    t = k.shape[0]
    hd = dim // n_heads
    if b == 0:
        return np.zeros((0, dim), dtype=q.dtype), np.zeros((t, n_heads), dtype=q.dtype)
    rep = _repeat_index(seg)
    scale = np.asarray(1.0 / np.sqrt(hd), dtype=q.dtype)
    qr = q.reshape(b, n_heads, hd)
    kr = k.reshape(t, n_heads, hd)
    vr = v.reshape(t, n_heads, hd)
    scores = np.einsum("thd,thd->th", qr[rep], kr) * scale
    smax = np.maximum.reduceat(scores, seg[:-1], axis=0)
    e = np.exp(scores - smax[rep])
    ssum = np.add.reduceat(e, seg[:-1], axis=0)
    weights = e / ssum[rep]
    out = np.add.reduceat(vr * weights[:, :, None], seg[:-1], axis=0)
    return out.reshape(b, dim), weights


def attention_bwd(q, k, v, seg, n_heads, weights, dout):
    b, dim = q.shape
    t = k.shape[0]
    hd = dim // n_heads
    if b == 0:
        z = np.zeros_like
        return z(q), z(k), z(v)
    rep = _repeat_index(seg)
    scale = np.asarray(1.0 / np.sqrt(hd), dtype=q.dtype)
    qr = q.reshape(b, n_heads, hd)
    kr = k.reshape(t, n_heads, hd)
    vr = v.reshape(t, n_heads, hd)
    doutr = dout.reshape(b, n_heads, hd)[rep]
    dv = weights[:, :, None] * doutr
    dweights = np.einsum("thd,thd->th", doutr, vr)
    wsum = np.add.reduceat(weights * dweights, seg[:-1], axis=0)
    dscores = weights * (dweights - wsum[rep])
    dq = np.add.reduceat(dscores[:, :, None] * kr, seg[:-1], axis=0) * scale
    dk = dscores[:, :, None] * qr[rep] * scale
    return dq.reshape(b, dim), dk.reshape(t, dim), dv.reshape(t, dim)
