"""Gray-coded square QAM: mapping, hard (nearest point) decisions and SER."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SUPPORTED_ORDERS = (4, 16, 64, 256, 1024)


def _gray(n):
    return n ^ (n >> 1)


@dataclass(frozen=True, eq=False)
class QamConstellation:
    """Unit-average-energy square QAM with per-axis reflected Gray labels.

    Symbol index ``k`` carries the I-axis Gray code in its high bits and the
    Q-axis Gray code in its low bits.
    """

    order: int
    points: np.ndarray = field(repr=False)
    levels: np.ndarray = field(repr=False)  # per-axis amplitudes, indexed by Gray code

    @property
    def bits_per_symbol(self) -> int:
        return int(self.order).bit_length() - 1

    @property
    def side(self) -> int:
        return len(self.levels)

    def map(self, indices):
        return map_symbols(indices, self)

    def demap(self, samples):
        return demap_hard(samples, self)


def build_constellation(order: int) -> QamConstellation:
    if order not in SUPPORTED_ORDERS:
        raise ValueError(f"QAM order must be one of {SUPPORTED_ORDERS}, got {order!r}")
    side = int(round(np.sqrt(order)))
    half = side.bit_length() - 1
    # average energy of the unnormalized grid {±1, ±3, ...}^2 is 2(M-1)/3
    norm = np.sqrt(2.0 * (order - 1) / 3.0)
    pos = np.arange(side)
    amp = (2.0 * pos - (side - 1)) / norm
    levels = np.empty(side)
    levels[_gray(pos)] = amp
    k = np.arange(order)
    points = levels[k >> half] + 1j * levels[k & (side - 1)]
    points.setflags(write=False)
    levels.setflags(write=False)
    return QamConstellation(order=order, points=points, levels=levels)


def map_symbols(indices, c: QamConstellation):
    """Return the constellation points for ``indices`` (scalar or array)."""
    idx = np.asarray(indices)
    if idx.dtype.kind not in "iu":
        raise TypeError("symbol indices must be integers")
    if idx.size and (idx.min() < 0 or idx.max() >= c.order):
        raise ValueError(f"symbol index out of range [0, {c.order})")
    out = c.points[idx]
    return complex(out) if idx.ndim == 0 else out


def _axis_decision(values, levels):
    # levels are ordered by Gray code, so argmin's first-hit rule gives the
    # lowest code among equidistant levels
    d = (values[..., None] - levels) ** 2
    return np.argmin(d, axis=-1)


def demap_hard(samples, c: QamConstellation):
    """Nearest-point decision; ties resolve to the lowest symbol index.

    The square grid makes the 2-D argmin separable, and the I code occupies the
    high bits, so a per-axis lowest-code rule is the same as the lowest index.
    """
    z = np.asarray(samples)
    if not np.all(np.isfinite(z)):
        raise ValueError("cannot demap non-finite samples")
    half = c.bits_per_symbol // 2
    out = (_axis_decision(z.real, c.levels) << half) | _axis_decision(z.imag, c.levels)
    return int(out) if z.ndim == 0 else out


def symbol_error_rate(tx, rx) -> float:
    tx = np.asarray(tx)
    rx = np.asarray(rx)
    if tx.shape != rx.shape:
        raise ValueError(f"length mismatch: {tx.shape} vs {rx.shape}")
    if tx.size == 0:
        raise ValueError("symbol error rate of an empty sequence is undefined")
    return float(np.count_nonzero(tx != rx)) / tx.size
