from __future__ import annotations

import numpy as np

from .tensor import Tensor


def adam_step(param, grad, state, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update of ``param`` in place.

    ``state`` is a dict holding ``m``, ``v`` and the step count ``t``; it is
    created on first use.
    """
    if param.shape != grad.shape:
        raise ValueError(f"parameter shape {param.shape} != gradient shape {grad.shape}")
    if not state:
        state.update(m=np.zeros_like(param), v=np.zeros_like(param), t=0)
    elif state["m"].shape != param.shape:
        raise ValueError("optimizer state does not match parameter shape")
    state["t"] += 1
    t = state["t"]
    m, v = state["m"], state["v"]
    m *= beta1
    m += (1 - beta1) * grad
    v *= beta2
    v += (1 - beta2) * grad * grad
    m_hat = m / (1 - beta1**t)
    v_hat = v / (1 - beta2**t)
    param -= (lr * m_hat / (np.sqrt(v_hat) + eps)).astype(param.dtype, copy=False)
    return param


class Adam:
    def __init__(self, params: dict[str, Tensor], lr=1e-3, betas=(0.9, 0.999), eps=1e-8):
        self.params = params
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.state = {name: {} for name in params}

    def step(self):
        b1, b2 = self.betas
        for name, p in self.params.items():
            adam_step(p.data, p.grad, self.state[name], self.lr, b1, b2, self.eps)

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()


def clip_grad_norm(params, max_norm: float) -> float:
    """Scale all gradients so their global L2 norm is at most ``max_norm``."""
    grads = [p.grad for p in params]
    total = float(np.sqrt(sum(np.sum(np.square(g, dtype=np.float64)) for g in grads)))
    if total > max_norm:
        scale = max_norm / (total + 1e-12)
        for g in grads:
            g *= scale
    return total
