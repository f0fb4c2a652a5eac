"""Finite-difference verification of analytic gradients.

The oracle here is central differences over individual parameter components;
it is the independent check used by the test suite and the ``gradcheck`` CLI
command.  For large networks a seeded random subset of components is probed
per tensor to stay inside the runtime budget; small primitives are checked
exhaustively.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .autodiff import Tensor
from .params import ParamStore


def _loss_scalar(value) -> float:
    if isinstance(value, Tensor):
        return float(value.data)
    return float(value)


def finite_diff_check(f: Callable[[], Tensor], params: list[Tensor],
                      eps: float = 1e-3, max_components: int | None = None,
                      seed: int = 0) -> float:
    """Compare analytic gradients of a scalar function against central differences.

    Args:
        f: Zero-argument callable returning a scalar Tensor; it must read the
           current values of ``params`` on every call.
        params: Tensors whose gradients are verified.
        eps: Central-difference step.
        max_components: If set, probe at most this many randomly chosen
            components per tensor (seeded) instead of all of them.

    Returns:
        The worst relative error, with denominator max(|analytic|, |numeric|, 1e-8).
    """
    for p in params:
        p.grad = None
    out = f()
    out.backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy()
                for p in params]

    rng = np.random.default_rng(seed)
    worst = 0.0
    for p, a in zip(params, analytic):
        flat = p.data.reshape(-1)
        n = flat.size
        if max_components is not None and n > max_components:
            idxs = rng.choice(n, size=max_components, replace=False)
        else:
            idxs = np.arange(n)
        a_flat = a.reshape(-1)
        for i in idxs:
            orig = flat[i]
            flat[i] = orig + eps
            f_hi = _loss_scalar(f())
            flat[i] = orig - eps
            f_lo = _loss_scalar(f())
            flat[i] = orig
            numeric = (f_hi - f_lo) / (2.0 * eps)
            denom = max(abs(a_flat[i]), abs(numeric), 1e-8)
            rel = abs(a_flat[i] - numeric) / denom
            worst = max(worst, rel)
    for p in params:
        p.grad = None
    return worst


def finite_diff_check_store(f: Callable[[], Tensor], store: ParamStore,
                            eps: float = 1e-3, max_components: int | None = None,
                            seed: int = 0) -> float:
    """Run :func:`finite_diff_check` over every parameter in a store."""
    return finite_diff_check(f, [store.params[n] for n in store.names()],
                             eps=eps, max_components=max_components, seed=seed)


def with_gradient_probe(f: Callable[[], Tensor], params: list[Tensor],
                        seed: int = 0) -> Callable[[], Tensor]:
    """Wrap a loss so every parameter component has an O(1) gradient.

    Adds a fixed random +-1 linear term per parameter component.  In 32-bit
    the central-difference numerator carries ~1e-4 of rounding noise, which
    swamps the relative error of near-zero gradient components; the linear
    probe shifts every component's gradient to O(1) without masking backward
    bugs (the probe's own contribution to the difference is exact up to
    rounding, so any analytic-gradient defect above the noise floor still
    shows).
    """
    from . import autodiff as ad

    # Scale the probe to dominate the functional gradient so no component of
    # the combined gradient can land near zero.
    for p in params:
        p.grad = None
    f().backward()
    gmax = max((0.0, *(float(np.abs(p.grad).max()) for p in params
                       if p.grad is not None)))
    amp = 4.0 * (gmax + 1.0)
    for p in params:
        p.grad = None

    rng = np.random.default_rng(seed)
    probes = [(amp * rng.choice([-1.0, 1.0], size=p.data.shape)).astype(p.data.dtype)
              for p in params]
    # Centering keeps the probe's value ~0 at the evaluation point, so it
    # raises gradients without inflating |f| (which would raise fd noise).
    centers = [p.data.copy() for p in params]

    def probed() -> Tensor:
        total = f()
        for p, u, c in zip(params, probes, centers):
            total = ad.add(total, ad.sum_all(ad.mul(ad.sub(p, c), u)))
        return total

    return probed
