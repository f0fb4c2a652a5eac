"""Numeric kernel lanes and lane selection.

Two interchangeable implementations of the hot kernels exist:

* ``cy`` — the compiled Cython core (``instasim.kernels._core``), float32 only;
* ``py`` — the pure-NumPy lane (``instasim.kernels._numpy``), any float dtype.

The active lane is chosen at import time: the compiled core if it built,
otherwise NumPy.  Override with the ``INSTASIM_KERNELS`` environment variable
(``auto`` | ``py`` | ``cy``) or :func:`set_backend`.  Calls carrying float64
arrays are always routed to the NumPy lane, which is what the 64-bit
gradient-checking mode relies on.
"""

from __future__ import annotations

import os

import numpy as np

from . import _numpy as _py_lane

try:  # pragma: no cover - depends on whether the extension built
    from . import _core as _cy_lane
except ImportError:  # pragma: no cover
    _cy_lane = None

_LANES = {"py": _py_lane}
if _cy_lane is not None:
    _LANES["cy"] = _cy_lane


def _initial_backend() -> str:
    choice = os.environ.get("INSTASIM_KERNELS", "auto").lower()
    if choice == "auto":
        return "cy" if _cy_lane is not None else "py"
    if choice not in _LANES:
        raise ImportError(
            f"INSTASIM_KERNELS={choice!r} requested but that lane is unavailable "
            f"(have: {sorted(_LANES)})")
    return choice


_active_name = _initial_backend()
_active = _LANES[_active_name]


def available_backends() -> list[str]:
    return sorted(_LANES)


def backend_name() -> str:
    return _active_name


def get_backend(name: str | None = None):
    """Return a lane module by name (or the active one)."""
    if name is None:
        return _active
    try:
        return _LANES[name]
    except KeyError:
        raise ValueError(f"unknown kernel lane {name!r}; have {sorted(_LANES)}") from None


def set_backend(name: str) -> None:
    global _active, _active_name
    _active = get_backend(name)
    _active_name = name


def _lane_for(a: np.ndarray):
    # The compiled lane is float32-only; anything else runs on NumPy.
    if _active is not _py_lane and a.dtype != np.float32:
        return _py_lane
    return _active


# -- dispatching wrappers (signatures documented in _numpy) --------------------

def linear_fwd(x, w, b):
    return _lane_for(x).linear_fwd(x, w, b)


def linear_bwd(x, w, dy):
    return _lane_for(x).linear_bwd(x, w, dy)


def relu_fwd(x):
    return _lane_for(x).relu_fwd(x)


def relu_bwd(x, dy):
    return _lane_for(x).relu_bwd(x, dy)


def layernorm_fwd(x, gamma, beta, eps):
    return _lane_for(x).layernorm_fwd(x, gamma, beta, eps)


def layernorm_bwd(x, gamma, mean, rstd, dy):
    return _lane_for(x).layernorm_bwd(x, gamma, mean, rstd, dy)


def gather_rows(x, idx):
    return _lane_for(x).gather_rows(x, idx)


def scatter_add_rows(dy, idx, n_rows):
    return _lane_for(dy).scatter_add_rows(dy, idx, n_rows)


def segment_max_fwd(x, seg):
    return _lane_for(x).segment_max_fwd(x, seg)


def segment_max_bwd(argmax, dy, n_rows):
    return _lane_for(dy).segment_max_bwd(argmax, dy, n_rows)


def attention_fwd(q, k, v, seg, n_heads):
    return _lane_for(q).attention_fwd(q, k, v, seg, n_heads)


def attention_bwd(q, k, v, seg, n_heads, weights, dout):
    return _lane_for(q).attention_bwd(q, k, v, seg, n_heads, weights, dout)
