"""Post-training fixed-point quantization of a trained canceller.

Weights are rounded once to a symmetric per-tensor integer grid; activations
are fake-quantized (quantize then dequantize, in float) after every layer
using max-abs scales measured on a calibration batch.
"""
from __future__ import annotations

import copy
import csv
import math
from dataclasses import dataclass

import numpy as np

from .canceller import Canceller, evaluate, parameter_count, to_real
from .constellation import QamConstellation
from .dataset import SplitArrays
from .nncore import DTYPE

MIN_BITS, MAX_BITS = 4, 32
CALIBRATION_BLOCKS = 256
SWEEP_HEADER = ("bits", "ser_after", "latency_s", "param_bytes")


def _check_bits(bits):
    if int(bits) != bits or not MIN_BITS <= bits <= MAX_BITS:
        raise ValueError(f"bit width must be an integer in [{MIN_BITS}, {MAX_BITS}], got {bits}")
    return int(bits)


@dataclass(frozen=True)
class QuantScheme:
    weight_bits: int = 16
    activation_bits: int | None = None  # None: same as weight_bits

    def __post_init__(self):
        _check_bits(self.weight_bits)
        if self.activation_bits is None:
            object.__setattr__(self, "activation_bits", self.weight_bits)
        _check_bits(self.activation_bits)


def qmax(bits: int) -> int:
    return 2 ** (bits - 1) - 1


def scale_for(max_abs: float, bits: int) -> float:
    """Step size mapping ``max_abs`` onto the largest positive code; 1.0 for an all-zero tensor."""
    return float(max_abs) / qmax(bits) if max_abs > 0 else 1.0


def quantize_tensor(w, bits: int):
    """Return integer codes ``q`` and scale ``s`` with ``w ~ s*q``."""
    bits = _check_bits(bits)
    w = np.asarray(w, dtype=np.float64)
    s = scale_for(np.max(np.abs(w)) if w.size else 0.0, bits)
    q = np.clip(np.rint(w / s), -qmax(bits) - 1, qmax(bits)).astype(np.int64)
    return q, s


def fake_quant(x, s: float, bits: int):
    q = np.clip(np.rint(np.asarray(x, np.float64) / s), -qmax(bits) - 1, qmax(bits))
    return (q * s).astype(DTYPE)


class QuantizedCanceller(Canceller):
    """A canceller whose weights sit on an integer grid and whose activations
    are re-quantized after each layer."""

    def __init__(self, model: Canceller, scheme: QuantScheme):
        self.iq_mode = model.iq_mode
        self.net = copy.deepcopy(model.net)
        self.metadata = dict(model.metadata)
        self.scheme = scheme
        self.weight_scales: dict[str, float] = {}
        self.act_scales: list[float] | None = None
        for name, p in self.net.parameters().items():
            q, s = quantize_tensor(p.data, scheme.weight_bits)
            p.data[...] = (q * s).astype(DTYPE)
            self.weight_scales[name] = s

    @property
    def calibrated(self) -> bool:
        return self.act_scales is not None

    def calibrate(self, blocks: np.ndarray):
        """Max-abs activation ranges of the input and of every layer output."""
        x = to_real(np.asarray(blocks), self.iq_mode)
        if len(x) == 0:
            raise ValueError("calibration needs at least one block")
        self.net.eval()
        peaks = [np.max(np.abs(x))]
        for _, layer in self.net.layers:
            x = layer(x)
            peaks.append(np.max(np.abs(x)))
        self.act_scales = [scale_for(p, self.scheme.activation_bits) for p in peaks]
        return self

    def _run(self, chunk):
        if not self.calibrated:
            raise RuntimeError("activation scales not calibrated; call calibrate() first")
        b = self.scheme.activation_bits
        x = fake_quant(chunk, self.act_scales[0], b)
        for (_, layer), s in zip(self.net.layers, self.act_scales[1:]):
            x = fake_quant(layer(x), s, b)
        return x


def quantize_checkpoint(model: Canceller, scheme: QuantScheme, calibration: np.ndarray | None = None):
    """Quantize ``model``'s weights; calibrate activations when blocks are given.

    Batch-norm running statistics stay in float: in fixed-point hardware they fold
    into the preceding convolution's weights and bias.
    """
    qm = QuantizedCanceller(model, scheme)
    if calibration is not None:
        qm.calibrate(calibration)
    return qm


def quantized_forward(blocks, qmodel: QuantizedCanceller):
    return qmodel(blocks)


@dataclass(frozen=True)
class HardwareModel:
    clock_hz: float = 200e6
    nn_extra_cycles: int = 200
    power_estimate_watts: float = 1.0  # quoted figure, not modelled

    def __post_init__(self):
        if not self.clock_hz > 0 or self.nn_extra_cycles < 0 or not self.power_estimate_watts > 0:
            raise ValueError("clock and power must be positive, cycles non-negative")


def latency_estimate(hw: HardwareModel) -> float:
    return hw.nn_extra_cycles / hw.clock_hz


def param_bytes(model: Canceller, bits: int) -> int:
    return math.ceil(parameter_count(model) * bits / 8)


def sweep_report(
    model: Canceller,
    val: SplitArrays,
    test: SplitArrays,
    c: QamConstellation,
    bits_list,
    hw: HardwareModel | None = None,
    path=None,
):
    """SER after quantized cancellation for each bit width; optionally written as CSV."""
    hw = hw or HardwareModel()
    calib = val.corrupted[:CALIBRATION_BLOCKS]
    rows = []
    for bits in bits_list:
        qm = quantize_checkpoint(model, QuantScheme(bits), calib)
        rep = evaluate(qm, test, c)
        rows.append(dict(bits=int(bits), ser_after=rep.ser_after, latency_s=latency_estimate(hw),
                         param_bytes=param_bytes(model, bits)))
    if path is not None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(SWEEP_HEADER)
            for r in rows:
                w.writerow([r["bits"], repr(r["ser_after"]), repr(r["latency_s"]), r["param_bytes"]])
    return rows
