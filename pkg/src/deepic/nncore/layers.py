from __future__ import annotations

import numpy as np

from . import functional as F
from .tensor import DTYPE, Tensor, check_finite


class Module:
    training = True

    def parameters(self) -> dict[str, Tensor]:
        return {}

    def buffers(self) -> dict[str, np.ndarray]:
        return {}

    def train(self, mode: bool = True):
        self.training = mode
        return self

    def eval(self):
        return self.train(False)

    def zero_grad(self):
        for p in self.parameters().values():
            p.zero_grad()

    def __call__(self, x):
        return self.forward(x)


class _Cached(Module):
    _cache = None

    def _take_cache(self):
        if self._cache is None:
            raise RuntimeError(f"{type(self).__name__}.backward called without a forward pass")
        cache, self._cache = self._cache, None
        return cache


class Conv1d(_Cached):
    def __init__(self, in_ch: int, out_ch: int, kernel: int, padding: str = "same", rng=None):
        rng = np.random.default_rng() if rng is None else rng
        bound = np.sqrt(1.0 / (in_ch * kernel))
        self.weight = Tensor(rng.uniform(-bound, bound, (out_ch, in_ch, kernel)))
        self.bias = Tensor(np.zeros(out_ch))
        self.padding = padding

    @property
    def in_channels(self):
        return self.weight.shape[1]

    @property
    def out_channels(self):
        return self.weight.shape[0]

    def parameters(self):
        return {"weight": self.weight, "bias": self.bias}

    def forward(self, x):
        w, b = self.weight.data, self.bias.data
        out, cache = F.conv1d_forward(x, w.astype(x.dtype, copy=False), b.astype(x.dtype, copy=False), self.padding)
        if self.training:
            self._cache = cache
        return out

    def backward(self, dout):
        dx, dw, db = F.conv1d_backward(dout, self._take_cache())
        self.weight.accumulate(dw.astype(self.weight.data.dtype, copy=False))
        self.bias.accumulate(db.astype(self.bias.data.dtype, copy=False))
        return dx


class BatchNorm1d(_Cached):
    """Batch normalization over (batch, length) per channel.

    Running statistics start undefined; inference before the first training
    batch raises unless :meth:`reset_running_stats` seeded them.
    """

    def __init__(self, channels: int, eps: float = 1e-5, momentum: float = 0.1):
        self.gamma = Tensor(np.ones(channels))
        self.beta = Tensor(np.zeros(channels))
        self.eps = eps
        self.momentum = momentum
        self.running_mean = None
        self.running_var = None

    @property
    def channels(self):
        return self.gamma.shape[0]

    def reset_running_stats(self):
        self.running_mean = np.zeros(self.channels, DTYPE)
        self.running_var = np.ones(self.channels, DTYPE)

    def parameters(self):
        return {"gamma": self.gamma, "beta": self.beta}

    def buffers(self):
        if self.running_mean is None:
            return {}
        return {"running_mean": self.running_mean, "running_var": self.running_var}

    def forward(self, x):
        g = self.gamma.data.astype(x.dtype, copy=False)
        b = self.beta.data.astype(x.dtype, copy=False)
        if self.training:
            out, cache = F.batchnorm1d_forward(x, g, b, eps=self.eps)
            self._update_running(cache[4], cache[5], x.shape[0] * x.shape[2])
            self._cache = cache
            return out
        if self.running_mean is None:
            raise RuntimeError("batchnorm inference before any running-statistics update")
        out, _ = F.batchnorm1d_forward(x, g, b, self.running_mean, self.running_var, self.eps)
        return out

    def _update_running(self, mean, var, n):
        unbiased = var * n / max(n - 1, 1)
        if self.running_mean is None:
            self.reset_running_stats()
        m = self.momentum
        self.running_mean = ((1 - m) * self.running_mean + m * mean).astype(DTYPE)
        self.running_var = ((1 - m) * self.running_var + m * unbiased).astype(DTYPE)

    def backward(self, dout):
        dx, dg, db = F.batchnorm1d_backward(dout, self._take_cache())
        self.gamma.accumulate(dg.astype(self.gamma.data.dtype, copy=False))
        self.beta.accumulate(db.astype(self.beta.data.dtype, copy=False))
        return dx


class ReLU(_Cached):
    def forward(self, x):
        out, mask = F.relu_forward(x)
        if self.training:
            self._cache = mask
        return out

    def backward(self, dout):
        return F.relu_backward(dout, self._take_cache())


class LSTM(_Cached):
    """One LSTM layer over ``[batch, seq, features]`` with zero initial state."""

    def __init__(self, in_features: int, hidden: int, rng=None, forget_bias: float = 1.0):
        rng = np.random.default_rng() if rng is None else rng
        bw, bu = np.sqrt(1.0 / in_features), np.sqrt(1.0 / hidden)
        self.W = Tensor(rng.uniform(-bw, bw, (4 * hidden, in_features)))
        self.U = Tensor(rng.uniform(-bu, bu, (4 * hidden, hidden)))
        b = np.zeros(4 * hidden)
        b[hidden : 2 * hidden] = forget_bias
        self.b = Tensor(b)

    @property
    def in_features(self):
        return self.W.shape[1]

    @property
    def hidden(self):
        return self.U.shape[1]

    def parameters(self):
        return {"W": self.W, "U": self.U, "b": self.b}

    def forward(self, x):
        dt = x.dtype
        out, cache = F.lstm_forward(
            x, self.W.data.astype(dt, copy=False), self.U.data.astype(dt, copy=False), self.b.data.astype(dt, copy=False)
        )
        if self.training:
            self._cache = cache
        return out

    def backward(self, dout):
        dx, dW, dU, db = F.lstm_backward(dout, self._take_cache())
        for p, g in ((self.W, dW), (self.U, dU), (self.b, db)):
            p.accumulate(g.astype(p.data.dtype, copy=False))
        return dx


class SwapAxes(Module):
    """``[batch, channels, length]`` <-> ``[batch, length, channels]``."""

    def forward(self, x):
        return np.ascontiguousarray(x.transpose(0, 2, 1))

    def backward(self, dout):
        return np.ascontiguousarray(dout.transpose(0, 2, 1))


class Sequential(Module):
    def __init__(self, layers):
        self.layers = list(layers)  # (name, module) pairs

    def __getitem__(self, name):
        return dict(self.layers)[name]

    def parameters(self):
        return {f"{n}.{k}": v for n, m in self.layers for k, v in m.parameters().items()}

    def buffers(self):
        return {f"{n}.{k}": v for n, m in self.layers for k, v in m.buffers().items()}

    def train(self, mode: bool = True):
        self.training = mode
        for _, m in self.layers:
            m.train(mode)
        return self

    def forward(self, x):
        for name, m in self.layers:
            x = check_finite(m.forward(x), f"forward of {name}")
        return x

    def backward(self, dout):
        for name, m in reversed(self.layers):
            dout = check_finite(m.backward(dout), f"backward of {name}")
        return dout
