import csv

import numpy as np
import pytest

from deepic.cli import main, read_config_file
from deepic.constellation import build_constellation, demap_hard
from deepic.dataset import load_split, read_manifest


def run(capsys, *argv):
    rc = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return rc, out, err


@pytest.fixture
def data(tmp_path, capsys):
    d = tmp_path / "d"
    rc, out, _ = run(capsys, "gen", "--frames", 10, "--qam", 16, "--sir-db", 3, "--seed", 7, "--dims", "1,2,64", "--out", d)
    assert rc == 0
    return d


def report(path):
    with open(path) as fh:
        return {row["metric"]: row["value"] for row in csv.DictReader(fh)}


def test_gen_echoes_flags(data):
    for name in ("train.dic", "val.dic", "test.dic", "manifest.txt"):
        assert (data / name).exists()
    m = read_manifest(data)
    assert (m.total_frames, m.qam_order, m.seed) == (10, 16, 7)
    assert m.interference.sir_db == 3.0 and m.interference.interferer_order == 16
    assert (m.train_frames, m.val_frames, m.test_frames) == (5, 1, 4)


@pytest.mark.parametrize(
    "argv, flag",
    [
        (["gen", "--qam", "7", "--out", "x"], "--qam"),
        (["gen", "--frames", "x", "--out", "x"], "--frames"),
        (["gen", "--sir-db", "3", "--calibrate-ser", "0.3", "--out", "x"], "--calibrate-ser"),
        (["train", "--data", "d"], "--out"),
        (["train", "--data", "d", "--out", "m", "--iq-mode", "complex"], "--iq-mode"),
        (["eval", "--data", "d", "--out", "o"], "--ckpt"),
        (["frobnicate"], "frobnicate"),
    ],
)
def test_usage_errors_exit_2(capsys, argv, flag):
    rc, _, err = run(capsys, *argv)
    assert rc == 2
    assert flag in err


def test_semantic_usage_errors(tmp_path, capsys, data):
    rc, _, err = run(capsys, "gen", "--frames", 10, "--split", "5,5,5", "--out", tmp_path / "x")
    assert rc == 2 and "--split" in err
    rc, _, err = run(capsys, "train", "--data", data, "--out", tmp_path / "m", "--lr", "-1")
    assert rc == 2
    rc, _, err = run(capsys, "gen", "--calibrate-ser", "1.5", "--out", tmp_path / "x")
    assert rc == 2


def test_runtime_errors_exit_1(tmp_path, capsys, data):
    rc, _, err = run(capsys, "train", "--data", tmp_path / "missing", "--out", tmp_path / "m")
    assert rc == 1
    bad = tmp_path / "bad.dicm"
    bad.write_bytes(b"DICM garbage")
    rc, _, err = run(capsys, "eval", "--data", data, "--ckpt", bad, "--out", tmp_path / "o")
    assert rc == 1 and "CheckpointError" in err


def test_calibrated_gen_hits_target(tmp_path, capsys):
    d = tmp_path / "cal"
    rc, out, _ = run(capsys, "gen", "--frames", 4, "--qam", 16, "--calibrate-ser", 0.376, "--seed", 1,
                     "--dims", "2,20,64", "--out", d)
    assert rc == 0 and "calibrated SIR" in out
    c = build_constellation(16)
    arrs = [load_split(d, s) for s in ("train", "val", "test")]
    y = np.concatenate([a.corrupted.ravel() for a in arrs])
    x = np.concatenate([a.clean.ravel() for a in arrs])
    assert abs(np.mean(demap_hard(y, c) != demap_hard(x, c)) - 0.376) <= 0.01
    rc, _, err = run(capsys, "gen", "--frames", 4, "--qam", 16, "--calibrate-ser", 0.3, "--out", tmp_path / "z")
    assert rc == 1 and "unreachable" in err


def test_train_eval_quant_pipeline(tmp_path, capsys, data):
    ck = tmp_path / "m.dicm"
    rc, out, _ = run(capsys, "train", "--data", data, "--out", ck, "--epochs", 2, "--batch-size", 4)
    assert rc == 0 and "final validation loss" in out
    curve = (tmp_path / "m.dicm.loss.csv").read_text().splitlines()
    assert curve[0] == "epoch,train_loss,val_loss,best_val_loss,lr" and len(curve) == 4

    rc, out, _ = run(capsys, "eval", "--data", data, "--ckpt", ck, "--out", tmp_path / "ev")
    assert rc == 0
    ev = tmp_path / "ev"
    for name in ("report.csv", "frame_ser.csv", "ser_hist.csv", "constellation.csv",
                 "constellation_corrupted.svg", "constellation_recovered.svg", "ser_hist.svg"):
        assert (ev / name).stat().st_size > 0
    rep = report(ev / "report.csv")
    assert rep["config.ckpt"] == str(ck) and rep["dataset.seed"] == "7"
    with open(ev / "ser_hist.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert sum(int(r["count_before"]) for r in rows) == 4
    assert sum(int(r["count_after"]) for r in rows) == 4
    assert (ev / "constellation_recovered.svg").read_text().startswith("<svg")

    rc, out, _ = run(capsys, "quant", "--data", data, "--ckpt", ck, "--bits", "8,16,32", "--out", tmp_path / "q.csv")
    assert rc == 0 and "latency: 1.0 us" in out
    lines = (tmp_path / "q.csv").read_text().splitlines()
    assert lines[0] == "bits,ser_after,latency_s,param_bytes" and len(lines) == 4


def test_identity_eval(tmp_path, capsys, data):
    rc, _, _ = run(capsys, "eval", "--data", data, "--identity", "--out", tmp_path / "ev")
    assert rc == 0
    rep = report(tmp_path / "ev" / "report.csv")
    assert rep["ser_after"] == rep["ser_before"] and float(rep["ser_before"]) > 0


def test_zero_epochs_warns(tmp_path, capsys, data, caplog):
    rc, _, _ = run(capsys, "train", "--data", data, "--out", tmp_path / "m.dicm", "--epochs", 0)
    assert rc == 0 and (tmp_path / "m.dicm").exists()
    assert any("epochs 0" in r.getMessage() for r in caplog.records)


def test_outputs_are_reproducible(tmp_path, capsys):
    outs = []
    for k in range(2):
        root = tmp_path / str(k)
        run(capsys, "gen", "--frames", 5, "--split", "2,1,2", "--qam", 16, "--sir-db", 8, "--dims", "1,2,64",
            "--out", root / "d")
        rc, out, _ = run(capsys, "train", "--data", root / "d", "--out", root / "m.dicm", "--epochs", 1, "--batch-size", 2)
        outs.append(out)
        run(capsys, "eval", "--data", root / "d", "--ckpt", root / "m.dicm", "--out", root / "ev")
    assert outs[0] == outs[1]
    for rel in ("d/train.dic", "d/manifest.txt", "m.dicm", "m.dicm.loss.csv", "ev/constellation.csv",
                "ev/ser_hist.svg", "ev/frame_ser.csv"):
        assert (tmp_path / "0" / rel).read_bytes() == (tmp_path / "1" / rel).read_bytes()


def test_config_file_and_override(tmp_path, capsys):
    cfg = tmp_path / "gen.cfg"
    cfg.write_text(f"# desk run\nframes = 4\nqam=16\nsir-db=5\ndims=1,1,64\nseed=3\nout={tmp_path / 'd'}\n")
    rc, _, _ = run(capsys, "gen", "--config", cfg, "--seed", 9)
    assert rc == 0
    m = read_manifest(tmp_path / "d")
    assert (m.total_frames, m.qam_order, m.interference.sir_db, m.seed) == (4, 16, 5.0, 9)
    cfg.write_text("qam=7\n")
    rc, _, err = run(capsys, "gen", "--config", cfg, "--out", tmp_path / "e")
    assert rc == 2 and "qam" in err
    cfg.write_text("colour=blue\n")
    rc, _, err = run(capsys, "gen", "--config", cfg, "--out", tmp_path / "e")
    assert rc == 2 and "colour" in err


def test_read_config_file(tmp_path):
    p = tmp_path / "c"
    p.write_text("a-b = 1\n\n# comment\nc=x=y\n")
    assert read_config_file(p) == {"a_b": "1", "c": "x=y"}


def test_bad_thread_env(monkeypatch, capsys):
    monkeypatch.setenv("DIC_THREADS", "zero")
    rc, _, err = run(capsys, "gen", "--out", "x")
    assert rc == 2 and "DIC_THREADS" in err
