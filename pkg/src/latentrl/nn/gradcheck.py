"""Finite-difference gradient oracle.

Central differences evaluated in float64 provide an independent check of
every analytic gradient in the engine.  The oracle never calls backward();
it only re-evaluates the loss at perturbed parameter values.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor

__all__ = ["finite_difference_grads", "max_relative_error", "gradient_check"]


def finite_difference_grads(
    loss_fn: Callable[[], Tensor],
    params: Sequence[Tensor],
    step: float = 1e-4,
) -> list[np.ndarray]:
    """Central-difference gradients of `loss_fn` w.r.t. every element of `params`.

    `loss_fn` is re-evaluated with each parameter element displaced by
    ±step; parameters are restored exactly afterwards.
    """
    grads = []
    for p in params:
        flat = p.data.reshape(-1)
        g = np.zeros(flat.shape, dtype=np.float64)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            hi = loss_fn().item()
            flat[i] = orig - step
            lo = loss_fn().item()
            flat[i] = orig
            g[i] = (hi - lo) / (2.0 * step)
        grads.append(g.reshape(p.data.shape))
    return grads


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """max |a - n| / max(1, |a|, |n|), elementwise."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    scale = np.maximum(1.0, np.maximum(np.abs(a), np.abs(n)))
    return float(np.max(np.abs(a - n) / scale))


def gradient_check(
    loss_fn: Callable[[], Tensor],
    params: Sequence[Tensor],
    step: float = 1e-4,
) -> float:
    """Compare backward() gradients of `loss_fn` against the oracle.

    Returns the largest relative error over all parameter elements.
    Parameters should be float64 for a trustworthy comparison.
    """
    for p in params:
        p.grad = None
    loss = loss_fn()
    loss.backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad for p in params]
    numeric = finite_difference_grads(loss_fn, params, step=step)
    return max(
        max_relative_error(a, n) for a, n in zip(analytic, numeric)
    )
