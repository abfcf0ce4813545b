"""How many bits does the canceller need?

Run after demo 02:  python demos/03_quantization_sweep.py [workdir]

Weights are snapped to a symmetric integer grid per tensor and activations are
re-quantized after every layer.  We sweep the word length and print the SER on
the test split alongside the storage it would cost.
"""
import sys
from pathlib import Path

from deepic.canceller import evaluate, load_checkpoint, parameter_count
from deepic.constellation import build_constellation
from deepic.dataset import load_split, read_manifest
from deepic.quant import HardwareModel, latency_estimate, sweep_report

work = Path(sys.argv[1] if len(sys.argv) > 1 else "desk_run")
model = load_checkpoint(work / "canceller.dicm")
c = build_constellation(read_manifest(work / "data").qam_order)
val, test = load_split(work / "data", "val"), load_split(work / "data", "test")

float_ser = evaluate(model, test, c).ser_after
print(f"float32 SER {float_ser:.5f}, {parameter_count(model)} parameters\n")
rows = sweep_report(model, val, test, c, [6, 8, 10, 12, 16, 32], path=work / "sweep.csv")
print("bits   SER       bytes")
for r in rows:
    print(f"{r['bits']:4d}   {r['ser_after']:.5f}   {r['param_bytes']}")

hw = HardwareModel()
print(f"\n{hw.nn_extra_cycles} extra cycles at {hw.clock_hz / 1e6:.0f} MHz -> {latency_estimate(hw) * 1e6:.1f} us added latency")
