"""Radio-frame resource grid and CP-OFDM modulation/demodulation."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .constellation import QamConstellation

SUBCARRIER_SPACING_HZ = 15_000.0


@dataclass(frozen=True)
class GridDims:
    subframes: int = 11
    ofdm_symbols_per_subframe: int = 140
    subcarriers: int = 180

    def __post_init__(self):
        for name in ("subframes", "ofdm_symbols_per_subframe", "subcarriers"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v <= 0:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.subframes, self.ofdm_symbols_per_subframe, self.subcarriers)

    @property
    def n_ofdm_symbols(self) -> int:
        return self.subframes * self.ofdm_symbols_per_subframe

    @property
    def size(self) -> int:
        return self.n_ofdm_symbols * self.subcarriers


@dataclass(eq=False)
class ResourceGrid:
    """Complex resource elements indexed ``(subframe, ofdm_symbol, subcarrier)``."""

    dims: GridDims
    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.shape != self.dims.shape:
            raise ValueError(f"grid data shape {self.data.shape} != dims {self.dims.shape}")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("resource grid contains non-finite values")

    @classmethod
    def zeros(cls, dims: GridDims):
        return cls(dims, np.zeros(dims.shape, dtype=complex))

    def flat(self) -> np.ndarray:
        """Resource elements in row-major (subframe, symbol, subcarrier) order."""
        return self.data.reshape(-1)


@dataclass(frozen=True)
class OfdmConfig:
    fft_size: int = 256
    cp_length: int = 18
    active_subcarriers: int = 180
    subcarrier_spacing: float = SUBCARRIER_SPACING_HZ

    def __post_init__(self):
        n = self.fft_size
        if n <= 0 or n & (n - 1):
            raise ValueError(f"fft_size must be a power of two, got {n}")
        if self.active_subcarriers <= 0 or self.active_subcarriers % 2:
            raise ValueError("active_subcarriers must be a positive even number")
        if n < self.active_subcarriers + 1:
            raise ValueError("fft_size must leave room for the active tones plus DC")
        if not 0 <= self.cp_length < n:
            raise ValueError("cp_length must lie in [0, fft_size)")
        if self.subcarrier_spacing != SUBCARRIER_SPACING_HZ:
            raise ValueError("subcarrier spacing is fixed at 15 kHz")

    @property
    def symbol_length(self) -> int:
        return self.fft_size + self.cp_length

    @property
    def sample_rate(self) -> float:
        return self.fft_size * self.subcarrier_spacing

    def active_bins(self) -> np.ndarray:
        """FFT bins of grid subcarriers 0..K-1 (offsets -K/2..-1, +1..+K/2; DC unused)."""
        half = self.active_subcarriers // 2
        offsets = np.concatenate([np.arange(-half, 0), np.arange(1, half + 1)])
        return offsets % self.fft_size


def _check_match(cfg: OfdmConfig, dims: GridDims):
    if dims.subcarriers != cfg.active_subcarriers:
        raise ValueError(
            f"grid has {dims.subcarriers} subcarriers but OFDM config expects "
            f"{cfg.active_subcarriers}"
        )


def ofdm_modulate(grid: ResourceGrid, cfg: OfdmConfig) -> np.ndarray:
    _check_match(cfg, grid.dims)
    freq = np.zeros((grid.dims.n_ofdm_symbols, cfg.fft_size), dtype=complex)
    freq[:, cfg.active_bins()] = grid.data.reshape(-1, grid.dims.subcarriers)
    body = np.fft.ifft(freq, axis=1, norm="ortho")
    with_cp = np.concatenate([body[:, cfg.fft_size - cfg.cp_length :], body], axis=1)
    return with_cp.reshape(-1)


def ofdm_demodulate(samples, cfg: OfdmConfig, dims: GridDims) -> ResourceGrid:
    _check_match(cfg, dims)
    samples = np.asarray(samples)
    expected = dims.n_ofdm_symbols * cfg.symbol_length
    if samples.ndim != 1 or samples.size != expected:
        raise ValueError(f"expected {expected} time samples, got {samples.size}")
    body = samples.reshape(dims.n_ofdm_symbols, cfg.symbol_length)[:, cfg.cp_length :]
    freq = np.fft.fft(body, axis=1, norm="ortho")
    return ResourceGrid(dims, freq[:, cfg.active_bins()].reshape(dims.shape))


def fill_grid_random(dims: GridDims, c: QamConstellation, seed: int):
    """Fill every resource element with an i.i.d. uniform constellation point.

    Returns the grid and the ground-truth symbol indices in row-major order.
    """
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, c.order, size=dims.size)
    return ResourceGrid(dims, c.points[idx].reshape(dims.shape)), idx
