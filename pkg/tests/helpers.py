"""Oracles and adapters shared by the test modules."""

import numpy as np


class ModelAsLayer:
    """Expose a MOSNet's frame scores through the single-layer interface."""

    def __init__(self, model):
        self.model = model

    def parameters(self):
        return self.model.parameters()

    def astype(self, dtype):
        self.model.astype(dtype)
        return self

    def forward(self, x, ctx):
        return self.model.forward(x, ctx.lengths, ctx.mode, ctx.rng)[0]

    def backward(self, grad):
        return self.model.backward(grad)


def randomise_biases(model, rng, low=0.05, high=0.2):
    """Nonzero biases keep ReLUs off their kink so finite differences are valid."""
    for name, p in model.parameters().items():
        if name.endswith(".b"):
            p.value = rng.uniform(low, high, p.value.shape).astype(p.value.dtype)


def relu_margin(model, x, lengths):
    """Smallest |input| seen by any ReLU of a MOS model on ``x``."""
    from mosnet.nn import Context

    ctx = Context(np.asarray(lengths))
    h = np.asarray(x, dtype=np.float64)
    margin = np.inf
    for layer in model.body.layers:
        if layer.kind == "relu":
            margin = min(margin, float(np.min(np.abs(h))))
        h = layer.forward(h, ctx)
    return margin


def gradient_band_clear(model, x, lengths, seed, low=1e-8, high=1e-6):
    """True when no analytic gradient element lies in ``(low, high)``.

    Central differences at step 1e-5 carry about 1e-11 of float64 noise, so
    elements that small cannot be resolved to 1e-4 relative error. The probe
    matches the one ``grad_check`` builds for the same ``seed``.
    """
    from mosnet.nn import Context

    layer = ModelAsLayer(model)
    ctx = Context(np.asarray(lengths), mode="eval", rng=np.random.default_rng(seed))
    out = layer.forward(np.asarray(x, dtype=np.float64), ctx)
    probe = np.random.default_rng(seed + 1).standard_normal(out.shape)
    for p in model.parameters().values():
        p.zero_grad()
    grads = [layer.backward(probe)] + [p.grad for p in model.parameters().values()]
    mags = np.abs(np.concatenate([g.ravel() for g in grads]))
    return not np.any((mags > low) & (mags < high))


def well_conditioned(model, rng, x, lengths, seed=0, margin=1e-3, attempts=500):
    """Redraw weights until finite differences are meaningful for ``model``.

    Weights get He scaling so a deep narrow stack keeps unit gain. Instances
    with a ReLU input closer than ``margin`` to its kink, or with gradient
    elements below the finite-difference resolution, are redrawn. Returns the
    number of redraws.
    """
    model.astype(np.float64)
    for redraws in range(attempts):
        for name, p in model.parameters().items():
            if name.endswith(".W"):
                fan_in = int(np.prod(p.value.shape[:-1]))
                p.value = rng.normal(0, np.sqrt(2.0 / fan_in), p.value.shape)
        randomise_biases(model, rng)
        if relu_margin(model, x, lengths) >= margin and gradient_band_clear(model, x, lengths, seed):
            return redraws
    raise RuntimeError("no well-conditioned instance found")


def objective_by_summation(frame_lists, targets, alpha):
    """Combined objective evaluated with explicit Python loops."""
    total = 0.0
    for frames, g in zip(frame_lists, targets):
        frames = [float(v) for v in frames]
        pooled = 0.0
        for v in frames:
            pooled += v
        pooled /= len(frames)
        frame_term = 0.0
        for v in frames:
            frame_term += (g - v) ** 2
        total += (g - pooled) ** 2 + alpha / len(frames) * frame_term
    return total / len(targets)


def mse_exact(x, y):
    """Mean squared difference in exact rational arithmetic, rounded once."""
    from fractions import Fraction

    total = sum((Fraction(a) - Fraction(b)) ** 2 for a, b in zip(x, y))
    return float(total / len(x))


def pearson_by_formula(x, y):
    n = len(x)
    mx = sum(x) / n
    my = sum(y) / n
    sxy = sum((a - mx) * (b - my) for a, b in zip(x, y))
    sxx = sum((a - mx) ** 2 for a in x)
    syy = sum((b - my) ** 2 for b in y)
    return sxy / (sxx * syy) ** 0.5


def average_ranks(x):
    """1-based ranks with ties sharing the mean of their positions."""
    order = sorted(range(len(x)), key=lambda k: x[k])
    ranks = [0.0] * len(x)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and x[order[j + 1]] == x[order[i]]:
            j += 1
        for k in range(i, j + 1):
            ranks[order[k]] = (i + j) / 2 + 1
        i = j + 1
    return ranks


def spearman_by_ranks(x, y):
    return pearson_by_formula(average_ranks(list(x)), average_ranks(list(y)))


def tied_pair(rng, n):
    """Random vectors where roughly a tenth of the entries repeat other values."""
    x = rng.standard_normal(n)
    y = 0.5 * x + rng.standard_normal(n)
    for v in (x, y):
        k = max(1, n // 10)
        src = rng.integers(0, n, k)
        dst = rng.integers(0, n, k)
        v[dst] = v[src]
    return np.round(x, 3), np.round(y, 3)
