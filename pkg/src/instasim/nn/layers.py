"""Network building blocks: the shared MLP block and the Gaussian action head."""

from __future__ import annotations

import math

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .params import ParamStore

LOG_STD_MIN = -5.0
LOG_STD_MAX = 1.0

LOG_TWO_PI = math.log(2.0 * math.pi)


class MLPBlock:
    """linear -> layer norm -> ReLU -> linear."""

    def __init__(self, store: ParamStore, prefix: str,
                 in_dim: int, hidden_dim: int, out_dim: int):
        self.in_dim = in_dim
        self.hidden_dim = hidden_dim
        self.out_dim = out_dim
        self.w1 = store.create(f"{prefix}.fc1.w", (in_dim, hidden_dim), "fanin")
        self.b1 = store.create(f"{prefix}.fc1.b", (hidden_dim,))
        self.ln_scale = store.create(f"{prefix}.ln.scale", (hidden_dim,), "ones")
        self.ln_shift = store.create(f"{prefix}.ln.shift", (hidden_dim,))
        self.w2 = store.create(f"{prefix}.fc2.w", (hidden_dim, out_dim), "fanin")
        self.b2 = store.create(f"{prefix}.fc2.b", (out_dim,))

    def __call__(self, x: Tensor) -> Tensor:
        h = ad.linear(x, self.w1, self.b1)
        h = ad.layer_norm(h, self.ln_scale, self.ln_shift)
        h = ad.relu(h)
        return ad.linear(h, self.w2, self.b2)


class GaussianHead:
    """Diagonal Gaussian over (accel, steer) decoded from a refined token.

    The head outputs means and clamped log-stds; sampling and clamping to the
    physical action bounds happen outside the density, so log_prob is exact
    for the unclamped Gaussian.
    """

    def __init__(self, store: ParamStore, prefix: str, in_dim: int, hidden_dim: int,
                 logstd_init: float = -1.0):
        self.mlp = MLPBlock(store, prefix, in_dim, hidden_dim, 4)
        # Start with moderate exploration noise rather than std = 1.
        self.mlp.b2.data[2:] = logstd_init

    def __call__(self, z: Tensor) -> tuple[Tensor, Tensor]:
        out = self.mlp(z)
        mean = ad.slice_cols(out, 0, 2)
        log_std = ad.clip(ad.slice_cols(out, 2, 4), LOG_STD_MIN, LOG_STD_MAX)
        return mean, log_std

    @staticmethod
    def log_prob(mean: Tensor, log_std: Tensor, actions: np.ndarray) -> Tensor:
        """Per-sample log density of ``actions`` under N(mean, exp(log_std)^2)."""
        a = ad.as_tensor(np.asarray(actions, dtype=mean.dtype))
        z2 = ad.mul(ad.square(ad.sub(a, mean)), ad.exp(ad.mul(log_std, -2.0)))
        per_dim = ad.add(ad.add(z2, ad.mul(log_std, 2.0)), LOG_TWO_PI)
        return ad.mul(ad.sum_axis(per_dim, -1), -0.5)

    @staticmethod
    def entropy(log_std: Tensor) -> Tensor:
        """Per-sample differential entropy of the diagonal Gaussian."""
        return ad.add(ad.sum_axis(log_std, -1), 0.5 * log_std.shape[-1] * (1.0 + LOG_TWO_PI))

    @staticmethod
    def sample(mean: np.ndarray, log_std: np.ndarray,
               rng: np.random.Generator) -> np.ndarray:
        noise = rng.standard_normal(mean.shape)
        return mean + np.exp(log_std) * noise


def max_pool_set(tokens: list[Tensor]) -> tuple[Tensor, np.ndarray]:
    """Element-wise maximum over a non-empty list of equally shaped tokens.

    Gradient is routed to the argmax token only; ties break to the lowest
    list index.  Returns (pooled, argmax indices).
    """
    if not tokens:
        raise ValueError("max_pool_set: empty token list")
    shape = tokens[0].data.shape
    for t in tokens[1:]:
        if t.data.shape != shape:
            raise ValueError("max_pool_set: token shapes differ")
    # Stack tokens as the rows of a single segment and reduce.
    rows = ad.concat([_as_row(t) for t in tokens], axis=0)
    seg = np.array([0, len(tokens)], dtype=np.int64)
    pooled, argmax = ad.segment_max(rows, seg)
    return _squeeze_row(pooled), argmax[0]


def _as_row(t: Tensor) -> Tensor:
    return ad._make(t.data.reshape(1, -1), (t,),
                    lambda g, t=t: ad._accum(t, g.reshape(t.data.shape)))


def _squeeze_row(t: Tensor) -> Tensor:
    return ad._make(t.data.reshape(-1), (t,),
                    lambda g, t=t: ad._accum(t, g.reshape(t.data.shape)))


def multi_head_cross_attention(store_prefix_params: dict, query: Tensor,
                               kv: Tensor, n_heads: int) -> Tensor:
    """Single-query multi-head cross-attention over a KV token set.

    ``store_prefix_params`` maps {"wq","wk","wv","wo","bq","bk","bv","bo"} to
    parameter tensors.  ``query`` is (D,) or (1, D); ``kv`` is (N, D).
    """
    if kv.data.shape[0] == 0:
        raise ValueError("multi_head_cross_attention: empty KV set")
    p = store_prefix_params
    q2 = _as_row(query) if query.data.ndim == 1 else query
    q = ad.linear(q2, p["wq"], p["bq"])
    # No key bias: with a single query per segment it cannot affect the
    # softmax, so it would be a dead parameter.
    k = ad.matmul(kv, p["wk"])
    v = ad.linear(kv, p["wv"], p["bv"])
    seg = np.array([0, kv.data.shape[0]], dtype=np.int64)
    attn = ad.segment_attention(q, k, v, seg, n_heads)
    out = ad.linear(attn, p["wo"], p["bo"])
    return _squeeze_row(out) if query.data.ndim == 1 else out


def make_attention_params(store: ParamStore, prefix: str, dim: int) -> dict:
    return {
        "wq": store.create(f"{prefix}.wq", (dim, dim), "fanin"),
        "bq": store.create(f"{prefix}.bq", (dim,)),
        "wk": store.create(f"{prefix}.wk", (dim, dim), "fanin"),
        "wv": store.create(f"{prefix}.wv", (dim, dim), "fanin"),
        "bv": store.create(f"{prefix}.bv", (dim,)),
        "wo": store.create(f"{prefix}.wo", (dim, dim), "fanin"),
        "bo": store.create(f"{prefix}.bo", (dim,)),
    }
