"""Co-channel QAM interference and AWGN at the resource-element level."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np

from .constellation import SUPPORTED_ORDERS, QamConstellation, build_constellation, demap_hard
from .phy import GridDims, ResourceGrid, fill_grid_random

BLOCK_LEN = 64
SIR_BRACKET_DB = (-10.0, 50.0)

# stream tags keep the random draws of different purposes independent
_PHASE, _SYMBOLS, _NOISE, _CALIB = 1, 2, 3, 4


class GainScope(enum.IntEnum):
    PER_DATASET = 0
    PER_FRAME = 1
    PER_BLOCK = 2

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        if isinstance(value, str):
            try:
                return cls[value.upper()]
            except KeyError:
                raise ValueError(f"unknown gain scope {value!r}") from None
        return cls(int(value))


@dataclass(frozen=True)
class InterferenceConfig:
    """``sir_db = inf`` switches the interferer off."""

    sir_db: float
    interferer_order: int = 256
    gain_scope: GainScope = GainScope.PER_DATASET
    seed: int = 0

    def __post_init__(self):
        if math.isnan(self.sir_db) or self.sir_db == -math.inf:
            raise ValueError(f"sir_db must be finite or +inf, got {self.sir_db}")
        if self.interferer_order not in SUPPORTED_ORDERS:
            raise ValueError(f"unsupported interferer order {self.interferer_order}")
        object.__setattr__(self, "gain_scope", GainScope.parse(self.gain_scope))

    @property
    def enabled(self) -> bool:
        return math.isfinite(self.sir_db)

    @property
    def amplitude(self) -> float:
        return 10.0 ** (-self.sir_db / 20.0) if self.enabled else 0.0


@dataclass(frozen=True)
class NoiseConfig:
    """``snr_db = None`` means no noise."""

    snr_db: float | None = None

    def __post_init__(self):
        if self.snr_db is not None and not math.isfinite(self.snr_db):
            raise ValueError("snr_db must be finite when noise is on")

    @property
    def enabled(self) -> bool:
        return self.snr_db is not None

    @property
    def variance(self) -> float:
        return 10.0 ** (-self.snr_db / 10.0) if self.enabled else 0.0


def _rng(*words):
    return np.random.default_rng(np.random.SeedSequence([int(w) & 0xFFFFFFFF for w in words]))


def _phases(cfg: InterferenceConfig, frame_id: int, n_res: int) -> np.ndarray:
    """Interferer phase for every RE of one frame."""
    if cfg.gain_scope is GainScope.PER_DATASET:
        phi = _rng(cfg.seed, _PHASE).uniform(0.0, 2 * np.pi)
        return np.full(n_res, phi)
    rng = _rng(cfg.seed, frame_id, _PHASE)
    if cfg.gain_scope is GainScope.PER_FRAME:
        return np.full(n_res, rng.uniform(0.0, 2 * np.pi))
    n_blocks = -(-n_res // BLOCK_LEN)
    return np.repeat(rng.uniform(0.0, 2 * np.pi, n_blocks), BLOCK_LEN)[:n_res]


def apply_interference(grid: ResourceGrid, cfg: InterferenceConfig, frame_id: int = 0):
    """Add ``g * i`` to every RE, ``i`` a uniform random point of the interferer.

    ``g = A exp(j phi)`` with ``A = 10**(-sir_db/20)``; ``phi`` is drawn once per
    ``cfg.gain_scope`` unit. Returns ``(corrupted, interferer_contribution)``
    where the contribution is exactly ``corrupted - grid``.
    """
    if not cfg.enabled:
        return ResourceGrid(grid.dims, grid.data.copy()), ResourceGrid.zeros(grid.dims)
    ic = build_constellation(cfg.interferer_order)
    n = grid.dims.size
    sym = ic.points[_rng(cfg.seed, frame_id, _SYMBOLS).integers(0, ic.order, n)]
    gain = cfg.amplitude * np.exp(1j * _phases(cfg, frame_id, n))
    corrupted = grid.flat() + gain * sym
    truth = corrupted - grid.flat()
    return (
        ResourceGrid(grid.dims, corrupted.reshape(grid.dims.shape)),
        ResourceGrid(grid.dims, truth.reshape(grid.dims.shape)),
    )


def awgn(shape, variance: float, rng) -> np.ndarray:
    """Circularly-symmetric complex Gaussian samples with total variance ``variance``."""
    s = np.sqrt(variance / 2.0)
    return s * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def apply_awgn(grid: ResourceGrid, cfg: NoiseConfig, seed: int) -> ResourceGrid:
    if not cfg.enabled:
        return ResourceGrid(grid.dims, grid.data.copy())
    noise = awgn(grid.dims.shape, cfg.variance, _rng(seed, _NOISE))
    return ResourceGrid(grid.dims, grid.data + noise)


def _calibration_ser(c: QamConstellation, cfg: InterferenceConfig, trials: int, sir_db: float):
    # common random numbers: same symbols and interferer draws for every SIR
    dims = GridDims(1, 1, trials)
    grid, idx = fill_grid_random(dims, c, int(_rng(cfg.seed, _CALIB).integers(2**31)))
    corrupted, _ = apply_interference(grid, replace(cfg, sir_db=sir_db), frame_id=0)
    return float(np.mean(demap_hard(corrupted.flat(), c) != idx))


def calibrate_sir(
    target_ser: float,
    c: QamConstellation,
    cfg: InterferenceConfig,
    trials: int = 200_000,
    tol: float = 0.01,
    max_iter: int = 60,
) -> float:
    """Bisect the SIR (dB) at which hard decisions on corrupted REs hit ``target_ser``.

    Uses the interferer model of ``cfg`` (constellation, phase law, seed), so a
    per-dataset phase is calibrated against the phase the dataset will see.
    """
    if not 0.0 < target_ser < 1.0:
        raise ValueError("target_ser must lie strictly between 0 and 1")
    lo, hi = SIR_BRACKET_DB
    ser_lo = _calibration_ser(c, cfg, trials, lo)
    ser_hi = _calibration_ser(c, cfg, trials, hi)
    if not ser_hi - tol <= target_ser <= ser_lo + tol:
        raise ValueError(
            f"target SER {target_ser} unreachable in [{lo}, {hi}] dB "
            f"(SER spans {ser_hi:.4f}..{ser_lo:.4f})"
        )
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        ser = _calibration_ser(c, cfg, trials, mid)
        if abs(ser - target_ser) <= tol:
            return mid
        if ser > target_ser:
            lo = mid
        else:
            hi = mid
    # Without noise and with a fixed phase the SER is a staircase in SIR; a
    # target that falls inside one of its jumps cannot be hit.
    raise ValueError(
        f"target SER {target_ser} +/- {tol} unreachable: SER jumps across it near {mid:.4f} dB"
    )
