"""Train the canceller on a small corpus and watch the interference go away.

Run:  python demos/02_desk_scale_cancellation.py [workdir]

Thirty short frames (2 subframes x 20 symbols x 64 subcarriers) of 16QAM,
hit by a 16QAM interferer whose power is tuned so that plain hard decisions
get about 37.6 % of symbols wrong.  Training takes roughly ten minutes on one
CPU core.  Afterwards the script writes the constellation scatters and the
per-frame SER histogram as SVG next to the checkpoint.
"""
import sys
import time
from pathlib import Path

import numpy as np

from deepic.canceller import TrainConfig, dump_constellation, evaluate, save_checkpoint, train, write_loss_curve
from deepic.channel import InterferenceConfig, calibrate_sir
from deepic.cli import ser_histogram
from deepic.constellation import build_constellation
from deepic.dataset import DatasetManifest, generate_dataset, load_split
from deepic.phy import GridDims
from deepic.svg import histogram_svg, scatter_svg

work = Path(sys.argv[1] if len(sys.argv) > 1 else "desk_run")
work.mkdir(parents=True, exist_ok=True)
c = build_constellation(16)

sir = calibrate_sir(0.376, c, InterferenceConfig(0.0, interferer_order=16, seed=0))
manifest = DatasetManifest(
    total_frames=30, train_frames=15, val_frames=5, test_frames=10,
    dims=GridDims(2, 20, 64), qam_order=16,
    interference=InterferenceConfig(sir, interferer_order=16, seed=0),
)
generate_dataset(manifest, work / "data")
train_set, val_set, test_set = (load_split(work / "data", s) for s in ("train", "val", "test"))
print(f"SIR {sir:.2f} dB; blocks: {len(train_set)} train / {len(val_set)} val / {len(test_set)} test")


def show(row):
    if row["epoch"] % 25 == 0:
        print(f"  epoch {row['epoch']:3d}  train {row['train_loss']:.5f}  val {row['val_loss']:.5f}", flush=True)


t0 = time.time()
result = train(train_set, val_set, TrainConfig(), progress=show)
print(f"trained in {time.time() - t0:.0f} s; best val MSE {result.best_val_loss:.5f}")
save_checkpoint(result.model, work / "canceller.dicm")
write_loss_curve(result.history, work / "loss.csv")

rep = evaluate(result.model, test_set, c)
print(f"\ntest SER before {rep.ser_before:.4f}   after {rep.ser_after:.5f}")
print("per-frame SER after:", np.array2string(rep.frame_ser_after, precision=4))

dump_constellation(result.model, test_set, 16, work / "constellation.csv")
pts = np.loadtxt(work / "constellation.csv", delimiter=",", skiprows=1)
(work / "corrupted.svg").write_text(scatter_svg(pts[:, 0] + 1j * pts[:, 1], "corrupted", 1.6, c.points))
(work / "recovered.svg").write_text(scatter_svg(pts[:, 2] + 1j * pts[:, 3], "recovered", 1.6, c.points))
edges, hb, ha = ser_histogram(rep.frame_ser_before, rep.frame_ser_after, 20)
(work / "ser_hist.svg").write_text(histogram_svg(edges, hb, ha, "per-frame SER"))
print(f"plots written to {work}/")
