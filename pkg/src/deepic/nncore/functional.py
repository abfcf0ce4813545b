"""Forward/backward kernels. Each ``*_forward`` returns ``(out, cache)``."""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _same_pad(k: int) -> int:
    if k % 2 == 0:
        raise ValueError("same padding needs an odd kernel size")
    return k // 2


def conv1d_forward(x, w, b, padding: str = "same"):
    """Stride-1 cross-correlation of ``x[B, C, L]`` with ``w[O, C, K]``."""
    if x.ndim != 3 or w.ndim != 3 or x.shape[1] != w.shape[1] or b.shape != (w.shape[0],):
        raise ValueError(f"conv1d shape mismatch: x{x.shape} w{w.shape} b{b.shape}")
    batch, _, length = x.shape
    out_ch, in_ch, k = w.shape
    if padding == "same":
        p = _same_pad(k)
    elif padding == "none":
        p = 0
    else:
        raise ValueError(f"unknown padding {padding!r}")
    if length + 2 * p < k:
        raise ValueError("input shorter than kernel")
    xp = np.pad(x, ((0, 0), (0, 0), (p, p))) if p else x
    # cols[b, t, c*k + j] = xp[b, c, t + j]
    cols = sliding_window_view(xp, k, axis=2).transpose(0, 2, 1, 3)
    out_len = cols.shape[1]
    cols = np.ascontiguousarray(cols).reshape(batch * out_len, in_ch * k)
    w2 = w.reshape(out_ch, in_ch * k)
    out = (cols @ w2.T + b).reshape(batch, out_len, out_ch).transpose(0, 2, 1)
    return np.ascontiguousarray(out), (cols, w2, x.shape, k, p)


def conv1d_backward(dout, cache):
    cols, w2, x_shape, k, p = cache
    batch, in_ch, length = x_shape
    out_ch = w2.shape[0]
    out_len = dout.shape[2]
    d = np.ascontiguousarray(dout.transpose(0, 2, 1)).reshape(batch * out_len, out_ch)
    db = d.sum(axis=0, dtype=np.float64).astype(dout.dtype)
    dw = (d.T @ cols).reshape(out_ch, in_ch, k)
    dcols = (d @ w2).reshape(batch, out_len, in_ch, k)
    dxp = np.zeros((batch, in_ch, length + 2 * p), dtype=dout.dtype)
    for j in range(k):
        dxp[:, :, j : j + out_len] += dcols[:, :, :, j].transpose(0, 2, 1)
    return dxp[:, :, p : p + length], dw, db


def batchnorm1d_forward(x, gamma, beta, mean=None, var=None, eps: float = 1e-5):
    """Per-channel normalization over (batch, length).

    With ``mean``/``var`` given (inference) the supplied statistics are used;
    otherwise batch statistics are computed and returned in the cache.
    """
    if x.ndim != 3 or gamma.shape != (x.shape[1],) or beta.shape != (x.shape[1],):
        raise ValueError(f"batchnorm shape mismatch: x{x.shape} gamma{gamma.shape}")
    if mean is None:
        mean = x.mean(axis=(0, 2), dtype=np.float64)
        var = ((x - mean[:, None].astype(x.dtype)) ** 2).mean(axis=(0, 2), dtype=np.float64)
        batch_stats = True
    else:
        batch_stats = False
    inv_std = (1.0 / np.sqrt(np.asarray(var, dtype=np.float64) + eps)).astype(x.dtype)
    xhat = (x - np.asarray(mean, dtype=x.dtype)[:, None]) * inv_std[:, None]
    out = gamma[:, None] * xhat + beta[:, None]
    return out, (xhat, inv_std, gamma, batch_stats, mean, var)


def batchnorm1d_backward(dout, cache):
    xhat, inv_std, gamma, batch_stats, _, _ = cache
    dgamma = (dout * xhat).sum(axis=(0, 2), dtype=np.float64).astype(dout.dtype)
    dbeta = dout.sum(axis=(0, 2), dtype=np.float64).astype(dout.dtype)
    dxhat = dout * gamma[:, None]
    if not batch_stats:
        return dxhat * inv_std[:, None], dgamma, dbeta
    n = dout.shape[0] * dout.shape[2]
    s1 = dxhat.sum(axis=(0, 2), dtype=np.float64).astype(dout.dtype)
    s2 = (dxhat * xhat).sum(axis=(0, 2), dtype=np.float64).astype(dout.dtype)
    dx = (inv_std / n)[:, None] * (n * dxhat - s1[:, None] - xhat * s2[:, None])
    return dx, dgamma, dbeta


def relu_forward(x):
    mask = x > 0
    return x * mask, mask


def relu_backward(dout, mask):
    return dout * mask


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def lstm_forward(x, W, U, b, h0=None, c0=None):
    """Single-layer LSTM over ``x[B, T, F]``.

    ``W[4H, F]``, ``U[4H, H]`` and ``b[4H]`` stack the gates in the order
    input, forget, cell candidate, output. Returns the hidden sequence
    ``[B, T, H]``.
    """
    if x.ndim != 3:
        raise ValueError(f"lstm input must be [batch, seq, features], got {x.shape}")
    batch, steps, feat = x.shape
    hidden = U.shape[1]
    if W.shape != (4 * hidden, feat) or U.shape != (4 * hidden, hidden) or b.shape != (4 * hidden,):
        raise ValueError(f"lstm parameter shapes W{W.shape} U{U.shape} b{b.shape} for input {x.shape}")
    dt = x.dtype
    h = np.zeros((batch, hidden), dt) if h0 is None else h0
    c = np.zeros((batch, hidden), dt) if c0 is None else c0
    xw = x @ W.T + b  # input projection for every step at once
    gates = np.empty((steps, batch, 4 * hidden), dt)  # activated i, f, g, o
    cs = np.empty((steps + 1, batch, hidden), dt)
    hs = np.empty((steps + 1, batch, hidden), dt)
    tcs = np.empty((steps, batch, hidden), dt)
    hs[0], cs[0] = h, c
    H = hidden
    for t in range(steps):
        z = xw[:, t] + hs[t] @ U.T
        a = gates[t]
        a[:, : 2 * H] = sigmoid(z[:, : 2 * H])
        a[:, 2 * H : 3 * H] = np.tanh(z[:, 2 * H : 3 * H])
        a[:, 3 * H :] = sigmoid(z[:, 3 * H :])
        cs[t + 1] = a[:, H : 2 * H] * cs[t] + a[:, :H] * a[:, 2 * H : 3 * H]
        tcs[t] = np.tanh(cs[t + 1])
        hs[t + 1] = a[:, 3 * H :] * tcs[t]
    out = np.ascontiguousarray(hs[1:].transpose(1, 0, 2))
    return out, (x, W, U, gates, cs, hs, tcs)


def lstm_backward(dout, cache):
    """Backpropagation through time. Returns ``dx, dW, dU, db``."""
    x, W, U, gates, cs, hs, tcs = cache
    steps, batch, fourH = gates.shape
    H = fourH // 4
    dt = dout.dtype
    dz = np.empty((steps, batch, fourH), dt)
    dh_next = np.zeros((batch, H), dt)
    dc_next = np.zeros((batch, H), dt)
    for t in range(steps - 1, -1, -1):
        a = gates[t]
        i, f, g, o = a[:, :H], a[:, H : 2 * H], a[:, 2 * H : 3 * H], a[:, 3 * H :]
        dh = dout[:, t] + dh_next
        tc = tcs[t]
        dc = dh * o * (1 - tc * tc) + dc_next
        d = dz[t]
        d[:, :H] = dc * g * i * (1 - i)
        d[:, H : 2 * H] = dc * cs[t] * f * (1 - f)
        d[:, 2 * H : 3 * H] = dc * i * (1 - g * g)
        d[:, 3 * H :] = dh * tc * o * (1 - o)
        dc_next = dc * f
        dh_next = d @ U
    dz_flat = dz.reshape(steps * batch, fourH)
    dU = dz_flat.T @ hs[:-1].reshape(steps * batch, H)
    x_tm = np.ascontiguousarray(x.transpose(1, 0, 2)).reshape(steps * batch, -1)
    dW = dz_flat.T @ x_tm
    db = dz_flat.sum(axis=0, dtype=np.float64).astype(dt)
    dx = (dz @ W).transpose(1, 0, 2)
    return np.ascontiguousarray(dx), dW, dU, db


def mse_loss(pred, target):
    """Mean squared error and its gradient with respect to ``pred``."""
    if pred.shape != target.shape:
        raise ValueError(f"mse shape mismatch: {pred.shape} vs {target.shape}")
    diff = pred - target
    loss = float(np.mean(np.square(diff, dtype=np.float64)))
    return loss, (2.0 / diff.size) * diff
