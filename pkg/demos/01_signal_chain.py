"""Walk through the physical layer before any learning happens.

Run:  python demos/01_signal_chain.py

We build a Gray-coded 16QAM alphabet, push a random resource grid through an
OFDM modulator and back, then look at what a co-channel QAM interferer does to
hard decisions as its power grows.
"""
import numpy as np
from scipy.stats import norm

from deepic.channel import InterferenceConfig, NoiseConfig, apply_awgn, apply_interference, calibrate_sir
from deepic.constellation import build_constellation, demap_hard, symbol_error_rate
from deepic.phy import GridDims, OfdmConfig, fill_grid_random, ofdm_demodulate, ofdm_modulate

c = build_constellation(16)
print("16QAM mean energy:", np.mean(np.abs(c.points) ** 2))
print("first row of the alphabet (index: point):")
for k in range(4):
    print(f"  {k:2d}: {c.points[k]:.3f}")

# --- OFDM round trip on a full-size frame ---------------------------------
dims = GridDims()  # 11 subframes x 140 symbols x 180 subcarriers
grid, idx = fill_grid_random(dims, build_constellation(256), seed=1)
cfg = OfdmConfig()
samples = ofdm_modulate(grid, cfg)
back = ofdm_demodulate(samples, cfg, dims)
print(f"\nframe: {dims.size} REs -> {samples.size} time samples")
print("worst round-trip error:", np.max(np.abs(back.data - grid.data)))

# --- QPSK over AWGN against the closed form --------------------------------
qpsk = build_constellation(4)
small = GridDims(1, 1, 1_000_000)
g, tx = fill_grid_random(small, qpsk, seed=2)
print("\nQPSK over AWGN, Monte Carlo vs 1-(1-Q(sqrt(Es/N0)))^2:")
for snr in (6.0, 10.0):
    rx = apply_awgn(g, NoiseConfig(snr), seed=3)
    mc = symbol_error_rate(tx, demap_hard(rx.flat(), qpsk))
    p = norm.sf(np.sqrt(10 ** (snr / 10)))
    print(f"  {snr:4.1f} dB   simulated {mc:.5f}   closed form {1 - (1 - p) ** 2:.5f}")

# --- the interference staircase ---------------------------------------------
# With one fixed interferer phase and no noise, only finitely many
# (symbol, interferer) pairs exist; each flips to an error at one amplitude,
# so the SER climbs in steps rather than smoothly.
g16, tx16 = fill_grid_random(GridDims(1, 1, 100_000), c, seed=4)
print("\nSIR (dB) -> SER with a 16QAM interferer, fixed phase:")
for sir in np.arange(14.0, 3.0, -1.0):
    y, _ = apply_interference(g16, InterferenceConfig(sir, interferer_order=16, seed=0))
    print(f"  {sir:5.1f}  {symbol_error_rate(tx16, demap_hard(y.flat(), c)):.4f}")

sir = calibrate_sir(0.376, c, InterferenceConfig(0.0, interferer_order=16, seed=0))
print(f"\ncalibrated SIR for a 0.376 baseline: {sir:.3f} dB")
