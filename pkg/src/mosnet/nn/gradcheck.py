"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

import copy
from typing import Callable

import numpy as np

from .layers import Context, Layer


def relative_error(analytic, numeric, floor=1e-8) -> float:
    """``max |a - n| / max(|a|, |n|, floor)`` over all elements."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    if a.size == 0:
        return 0.0
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom))


def numerical_gradient(f: Callable[[], float], array: np.ndarray, step=1e-5) -> np.ndarray:
    """Central differences of ``f()`` with respect to ``array``, perturbed in place."""
    grad = np.zeros(array.shape, dtype=np.float64)
    flat = array.reshape(-1)
    out = grad.reshape(-1)
    for k in range(flat.size):
        orig = flat[k]
        flat[k] = orig + step
        up = f()
        flat[k] = orig - step
        down = f()
        flat[k] = orig
        out[k] = (up - down) / (2 * step)
    return grad


def grad_check(layer: Layer, x: np.ndarray, lengths=None, mode="eval", seed=0,
               step=1e-5, check_input=True) -> float:
    """Max relative error between backprop and finite differences.

    The layer is copied and promoted to float64. The scalar probed is
    ``sum(layer(x) * R)`` for a fixed random ``R``; in train mode every
    forward reuses the same dropout stream so the function is deterministic.
    """
    layer = copy.deepcopy(layer).astype(np.float64)
    x = np.array(x, dtype=np.float64)
    if lengths is None:
        lengths = np.full(x.shape[0], x.shape[1]) if x.ndim >= 2 else np.ones(1, int)

    def ctx():
        return Context(lengths, mode=mode, rng=np.random.default_rng(seed))

    out = layer.forward(x, ctx())
    R = np.random.default_rng(seed + 1).standard_normal(out.shape)

    def loss():
        return float(np.sum(layer.forward(x, ctx()) * R))

    params = layer.parameters()
    for p in params.values():
        p.zero_grad()
    layer.forward(x, ctx())
    dx = layer.backward(R)

    worst = 0.0
    for p in params.values():
        worst = max(worst, relative_error(p.grad, numerical_gradient(loss, p.value, step)))
    if check_input:
        worst = max(worst, relative_error(dx, numerical_gradient(loss, x, step)))
    return worst
