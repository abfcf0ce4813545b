"""``deepic`` command line: gen, train, eval and quant subcommands.

Exit status is 0 on success, 1 when the work itself fails (bad files, NaN loss,
unreachable calibration target) and 2 for usage errors.

Every subcommand also accepts ``--config FILE``: plain ``key=value`` lines whose
keys are the long flag names without dashes (``sir-db=3`` or ``sir_db=3``).
Flags given on the command line win over the file.

Files written::

    gen    DIR/{train,val,test}.dic, DIR/manifest.txt
    train  checkpoint (DICM) and loss curve CSV:
           epoch,train_loss,val_loss,best_val_loss,lr
    eval   OUT/report.csv        metric,value  (summary plus resolved config)
           OUT/frame_ser.csv     frame_id,ser_before,ser_after
           OUT/ser_hist.csv      bin_lo,bin_hi,count_before,count_after
           OUT/constellation.csv corrupted_i,corrupted_q,recovered_i,recovered_q,clean_i,clean_q
           OUT/constellation_corrupted.svg, OUT/constellation_recovered.svg, OUT/ser_hist.svg
    quant  sweep CSV: bits,ser_after,latency_s,param_bytes

DIC_THREADS caps the BLAS worker threads (it has to be set before numpy loads).
"""
from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from pathlib import Path

SUPPORTED_QAM = (4, 16, 64, 256, 1024)
THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")

log = logging.getLogger("deepic")


class UsageError(Exception):
    pass


def _int_list(text):
    try:
        return [int(t) for t in str(text).split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _dims(text):
    vals = _int_list(text)
    if len(vals) != 3 or min(vals) <= 0:
        raise argparse.ArgumentTypeError("expected three positive integers SUBFRAMES,SYMBOLS,SUBCARRIERS")
    return vals


def _flag(text):
    if isinstance(text, bool):
        return text
    low = str(text).lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="deepic", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="simulate frames and write a DIC1 dataset")
    g.add_argument("--config")
    g.add_argument("--frames", type=int, default=1000)
    g.add_argument("--split", type=_int_list, help="TRAIN,VAL,TEST frame counts (default 50/10/40 %%)")
    g.add_argument("--qam", type=int, default=256, choices=SUPPORTED_QAM)
    g.add_argument("--interferer-qam", type=int, choices=SUPPORTED_QAM, help="default: same as --qam")
    sir = g.add_mutually_exclusive_group()
    sir.add_argument("--sir-db", type=float, help="'inf' turns interference off")
    sir.add_argument("--calibrate-ser", type=float, help="pick the SIR giving this baseline SER")
    g.add_argument("--gain-scope", default="per_dataset", choices=("per_dataset", "per_frame", "per_block"))
    g.add_argument("--snr-db", type=float, help="add AWGN at this SNR (default: no noise)")
    g.add_argument("--dims", type=_dims, default=[11, 140, 180], help="SUBFRAMES,SYMBOLS,SUBCARRIERS")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)

    t = sub.add_parser("train", help="train the canceller on a generated dataset")
    t.add_argument("--config")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True, help="checkpoint path")
    t.add_argument("--loss-csv", help="default: checkpoint path with .loss.csv")
    t.add_argument("--epochs", type=int)
    t.add_argument("--batch-size", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--seed", type=int)
    t.add_argument("--patience", type=int)
    t.add_argument("--iq-mode", choices=("split_iq", "stacked_iq"))
    t.add_argument("--schedule", choices=("onecycle", "constant"))
    t.add_argument("--reshuffle", type=_flag, help="re-block training REs every epoch (true/false)")
    t.add_argument("--clean-fraction", type=float, help="share of training blocks shown without interference")

    e = sub.add_parser("eval", help="SER before/after cancellation on the test split")
    e.add_argument("--config")
    e.add_argument("--data", required=True)
    src = e.add_mutually_exclusive_group(required=True)
    src.add_argument("--ckpt")
    src.add_argument("--identity", action="store_true", help="bypass the network (diagnostic)")
    e.add_argument("--out", required=True, help="output directory")
    e.add_argument("--blocks", type=int, default=16, help="blocks in the constellation dump")
    e.add_argument("--bins", type=int, default=20)

    q = sub.add_parser("quant", help="fixed-point bit-width sweep and latency estimate")
    q.add_argument("--config")
    q.add_argument("--data", required=True)
    q.add_argument("--ckpt", required=True)
    q.add_argument("--bits", type=_int_list, default=[8, 12, 16, 32])
    q.add_argument("--clock-hz", type=float, default=200e6)
    q.add_argument("--cycles", type=int, default=200)
    q.add_argument("--out", required=True, help="sweep CSV path")
    return p


def read_config_file(path) -> dict[str, str]:
    out = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key=value")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k.replace("-", "_")] = v
    return out


def _subparser(parser, name):
    action = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    return action.choices[name]


def _peek(argv):
    """Subcommand and ``--config`` path, found before full parsing."""
    command = next((a for a in argv if a in COMMANDS), None)
    config = None
    for i, a in enumerate(argv):
        if a == "--config" and i + 1 < len(argv):
            config = argv[i + 1]
        elif a.startswith("--config="):
            config = a.split("=", 1)[1]
    return command, config


def parse_args(argv):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    command, config = _peek(argv)
    if command is None or config is None:
        return parser.parse_args(argv)
    sp = _subparser(parser, command)
    try:
        file_vals = read_config_file(config)
    except OSError as exc:
        parser.error(f"--config: {exc}")
    except UsageError as exc:
        parser.error(str(exc))
    by_dest = {a.dest: a for a in sp._actions if a.dest not in ("help", "config")}
    defaults = {}
    for k, v in file_vals.items():
        act = by_dest.get(k)
        if act is None:
            parser.error(f"--config: unknown key {k!r} for '{command}'")
        try:
            val = _flag(v) if isinstance(act, argparse._StoreTrueAction) else act.type(v) if act.type else v
        except (ValueError, argparse.ArgumentTypeError) as exc:
            parser.error(f"--config: bad value for {k}: {exc}")
        if act.choices is not None and val not in act.choices:
            parser.error(f"--config: {k}={v} not one of {list(act.choices)}")
        defaults[k] = val
    sp.set_defaults(**defaults)
    # options the file supplies are no longer required on the command line
    for a in sp._actions:
        if a.dest in defaults:
            a.required = False
    for grp in sp._mutually_exclusive_groups:
        if any(a.dest in defaults for a in grp._group_actions):
            grp.required = False
    return parser.parse_args(argv)


def _resolved(args) -> list[tuple[str, str]]:
    skip = {"config", "verbose"}
    return [(k, ",".join(map(str, v)) if isinstance(v, list) else str(v)) for k, v in vars(args).items() if k not in skip]


# ------------------------------------------------------------------ commands


def cmd_gen(args):
    from .channel import InterferenceConfig, NoiseConfig, calibrate_sir
    from .constellation import build_constellation
    from .dataset import DatasetManifest, generate_dataset
    from .phy import GridDims

    if args.frames <= 0:
        raise UsageError("--frames must be positive")
    if args.split:
        if len(args.split) != 3 or sum(args.split) != args.frames or min(args.split) < 0:
            raise UsageError("--split needs three non-negative counts summing to --frames")
        n_train, n_val, n_test = args.split
    else:
        n_train, n_val = args.frames // 2, args.frames // 10
        n_test = args.frames - n_train - n_val
    if args.calibrate_ser is not None and not 0 < args.calibrate_ser < 1:
        raise UsageError("--calibrate-ser must lie strictly between 0 and 1")
    if args.snr_db is not None and not math.isfinite(args.snr_db):
        raise UsageError("--snr-db must be finite")
    inter_order = args.interferer_qam or args.qam
    ic = InterferenceConfig(math.inf, inter_order, args.gain_scope, args.seed)
    if args.calibrate_ser is not None:
        sir = calibrate_sir(args.calibrate_ser, build_constellation(args.qam), ic)
        print(f"calibrated SIR: {sir!r} dB (target SER {args.calibrate_ser})")
    else:
        sir = math.inf if args.sir_db is None else args.sir_db
        if math.isnan(sir) or sir == -math.inf:
            raise UsageError("--sir-db must be finite or inf")
    manifest = DatasetManifest(
        total_frames=args.frames,
        train_frames=n_train,
        val_frames=n_val,
        test_frames=n_test,
        dims=GridDims(*args.dims),
        qam_order=args.qam,
        interference=InterferenceConfig(sir, inter_order, args.gain_scope, args.seed),
        noise=NoiseConfig(args.snr_db),
        seed=args.seed,
    )
    generate_dataset(manifest, args.out)
    print(manifest.to_text(), end="")
    return 0


def cmd_train(args):
    from dataclasses import asdict

    from .canceller import TrainConfig, save_checkpoint, train, write_loss_curve
    from .dataset import load_split

    overrides = {
        k: getattr(args, k)
        for k in ("epochs", "batch_size", "lr", "seed", "patience", "iq_mode", "schedule", "reshuffle", "clean_fraction")
        if getattr(args, k) is not None
    }
    try:
        cfg = TrainConfig(**overrides)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if cfg.epochs == 0:
        log.warning("--epochs 0: writing the untrained initialization")
    train_data, val_data = load_split(args.data, "train"), load_split(args.data, "val")
    log.info("training on %d blocks, validating on %d; %s", len(train_data), len(val_data), asdict(cfg))
    res = train(train_data, val_data, cfg)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(res.model, args.out)
    write_loss_curve(res.history, args.loss_csv or str(args.out) + ".loss.csv")
    print(f"final validation loss: {res.history[-1]['val_loss']!r}")
    print(f"best validation loss: {res.best_val_loss!r}")
    return 0


def ser_histogram(before, after, bins):
    import numpy as np

    hi = max(float(max(before.max(initial=0), after.max(initial=0))), 1e-3)
    edges = np.linspace(0.0, hi, bins + 1)
    return edges, np.histogram(before, edges)[0], np.histogram(after, edges)[0]


def cmd_eval(args):
    import csv

    import numpy as np

    from .canceller import IdentityCanceller, dump_constellation, evaluate, load_checkpoint
    from .constellation import build_constellation
    from .dataset import load_split, read_manifest
    from .svg import histogram_svg, scatter_svg

    if args.bins <= 0 or args.blocks <= 0:
        raise UsageError("--bins and --blocks must be positive")
    manifest = read_manifest(args.data)
    c = build_constellation(manifest.qam_order)
    test = load_split(args.data, "test")
    model = IdentityCanceller() if args.identity else load_checkpoint(args.ckpt)
    rep = evaluate(model, test, c)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    with open(out / "report.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["metric", "value"])
        w.writerow(["ser_before", repr(rep.ser_before)])
        w.writerow(["ser_after", repr(rep.ser_after)])
        w.writerow(["n_symbols", rep.n_symbols])
        w.writerow(["n_frames", len(rep.frame_ids)])
        w.writerow(["iq_mode", model.iq_mode])
        for k, v in _resolved(args):
            w.writerow([f"config.{k}", v])
        for line in manifest.to_text().splitlines():
            k, v = line.split("=", 1)
            w.writerow([f"dataset.{k}", v])
    with open(out / "frame_ser.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["frame_id", "ser_before", "ser_after"])
        for f, b, a in zip(rep.frame_ids, rep.frame_ser_before, rep.frame_ser_after):
            w.writerow([int(f), repr(float(b)), repr(float(a))])
    edges, hb, ha = ser_histogram(rep.frame_ser_before, rep.frame_ser_after, args.bins)
    with open(out / "ser_hist.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bin_lo", "bin_hi", "count_before", "count_after"])
        for lo, hi, b, a in zip(edges[:-1], edges[1:], hb, ha):
            w.writerow([repr(float(lo)), repr(float(hi)), int(b), int(a)])

    n_blocks = min(args.blocks, len(test))
    dump_constellation(model, test, n_blocks, out / "constellation.csv")
    pts = np.loadtxt(out / "constellation.csv", delimiter=",", skiprows=1, ndmin=2)
    corrupted, recovered = pts[:, 0] + 1j * pts[:, 1], pts[:, 2] + 1j * pts[:, 3]
    extent = float(np.max(np.abs(np.r_[corrupted.real, corrupted.imag, recovered.real, recovered.imag, 1.0]))) * 1.05
    (out / "constellation_corrupted.svg").write_text(
        scatter_svg(corrupted, "corrupted symbols", extent, reference=c.points)
    )
    (out / "constellation_recovered.svg").write_text(
        scatter_svg(recovered, "recovered symbols", extent, reference=c.points)
    )
    (out / "ser_hist.svg").write_text(histogram_svg(edges, hb, ha, "SER of test frames"))
    print(f"ser_before={rep.ser_before!r} ser_after={rep.ser_after!r} frames={len(rep.frame_ids)}")
    return 0


def cmd_quant(args):
    from .canceller import load_checkpoint
    from .constellation import build_constellation
    from .dataset import load_split, read_manifest
    from .quant import HardwareModel, QuantScheme, latency_estimate, sweep_report

    try:
        for b in args.bits:
            QuantScheme(b)
        hw = HardwareModel(clock_hz=args.clock_hz, nn_extra_cycles=args.cycles)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if not args.bits:
        raise UsageError("--bits is empty")
    manifest = read_manifest(args.data)
    model = load_checkpoint(args.ckpt)
    rows = sweep_report(
        model,
        load_split(args.data, "val"),
        load_split(args.data, "test"),
        build_constellation(manifest.qam_order),
        args.bits,
        hw,
        args.out,
    )
    for r in rows:
        print(f"{r['bits']:>2} bits  ser_after={r['ser_after']:.6g}  param_bytes={r['param_bytes']}")
    print(f"latency: {latency_estimate(hw) * 1e6:.1f} us (power ~{hw.power_estimate_watts:g} W, quoted)")
    return 0


COMMANDS = {"gen": cmd_gen, "train": cmd_train, "eval": cmd_eval, "quant": cmd_quant}


def _limit_threads():
    raw = os.environ.get("DIC_THREADS")
    if raw is None:
        return
    if not raw.isdigit() or int(raw) < 1:
        raise UsageError(f"DIC_THREADS must be a positive integer, got {raw!r}")
    for var in THREAD_VARS:
        os.environ[var] = raw


def main(argv=None) -> int:
    try:
        _limit_threads()
    except UsageError as exc:
        print(f"deepic: error: {exc}", file=sys.stderr)
        return 2
    try:
        args = parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"deepic {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, RuntimeError, FloatingPointError) as exc:
        print(f"deepic {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
