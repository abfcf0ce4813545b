from __future__ import annotations

import numpy as np

DTYPE = np.float32


class NonFiniteError(FloatingPointError):
    """A forward or backward pass produced NaN or Inf."""


def check_finite(arr, where: str):
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"non-finite values in {where}")
    return arr


class Tensor:
    """A float32 array with an optional gradient buffer."""

    def __init__(self, data, requires_grad: bool = True, dtype=DTYPE):
        self.data = np.ascontiguousarray(data, dtype=dtype)
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(self.data) if requires_grad else None

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def zero_grad(self):
        if self.grad is not None:
            self.grad[...] = 0

    def accumulate(self, g):
        if self.grad is None:
            raise RuntimeError("tensor does not track gradients")
        if g.shape != self.data.shape:
            raise ValueError(f"gradient shape {g.shape} != tensor shape {self.data.shape}")
        self.grad += g

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"
