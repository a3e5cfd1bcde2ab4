"""Adam with bias correction."""

from __future__ import annotations

from typing import Iterable

import numpy as np

from .layers import Parameter


def adam_step(params: Iterable[Parameter], lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
    """Apply one Adam update to every parameter, then zero its gradient."""
    for p in params:
        p.step_count += 1
        g = p.grad
        p.adam_m *= beta1
        p.adam_m += (1 - beta1) * g
        p.adam_v *= beta2
        p.adam_v += (1 - beta2) * g * g
        m_hat = p.adam_m / (1 - beta1 ** p.step_count)
        v_hat = p.adam_v / (1 - beta2 ** p.step_count)
        p.value -= (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(p.value.dtype, copy=False)
        p.zero_grad()


class Adam:
    def __init__(self, params: Iterable[Parameter], lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def step(self):
        adam_step(self.params, self.lr, self.beta1, self.beta2, self.eps)
