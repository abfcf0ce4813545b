import math

import numpy as np
import pytest

from deepic.canceller import (
    INFER_CHUNK,
    Canceller,
    CheckpointError,
    IdentityCanceller,
    TrainConfig,
    build_network,
    dump_constellation,
    eval_loss,
    evaluate,
    load_checkpoint,
    lr_at,
    parameter_count,
    reblock,
    save_checkpoint,
    train,
)
from deepic.constellation import build_constellation, demap_hard
from deepic.dataset import SplitArrays
from deepic.nncore import NonFiniteError

C16 = build_constellation(16)


def toy_split(n_blocks, amp=0.3, seed=0, frames=None):
    rng = np.random.default_rng(seed)
    clean = C16.points[rng.integers(0, 16, (n_blocks, 64))].astype(np.complex64)
    intf = C16.points[rng.integers(0, 16, (n_blocks, 64))]
    corrupted = (clean + amp * np.exp(0.7j) * intf).astype(np.complex64)
    ids = np.arange(n_blocks) // 2 if frames is None else frames
    return SplitArrays(corrupted, clean, ids)


def table_recount(cin):
    """Layer-by-layer count written out from the architecture table."""
    conv = lambda i, o, k: o * (i * k + 1)
    bn = lambda ch: 4 * ch
    lstm = lambda i, h: 4 * (h * (i + h) + h)
    total = conv(cin, 32, 3) + bn(32) + conv(32, 32, 3) + bn(32)
    total += conv(32, 64, 3) + bn(64) + conv(64, 64, 3) + bn(64)
    total += lstm(64, 32) + lstm(32, 16) + lstm(16, 32) + lstm(32, 64)
    total += conv(64, 32, 3) + bn(32) + conv(32, 32, 3) + bn(32)
    return total + conv(32, cin, 1)


def test_parameter_count():
    assert parameter_count(Canceller("split_iq")) == table_recount(1)
    assert parameter_count(Canceller("stacked_iq")) == table_recount(2)
    p = Canceller("split_iq").parameters()
    assert sum(p[f"lstm1.{k}"].size for k in "WUb") == 12_416
    assert p["conv4.weight"].size + p["conv4.bias"].size == 33


def test_layer_chain():
    net = build_network(1)
    names = [n for n, _ in net.layers]
    assert names[:3] == ["conv1a.conv", "conv1a.bn", "conv1a.relu"]
    assert names[-1] == "conv4"
    assert [net[f"lstm{k}"].hidden for k in range(1, 5)] == [32, 16, 32, 64]
    assert net["conv4"].weight.shape == (1, 32, 1)
    assert build_network(2)["conv1a.conv"].weight.shape == (32, 2, 3)


@pytest.mark.parametrize("mode", ["split_iq", "stacked_iq"])
def test_forward_shapes_and_zero_input(mode):
    m = Canceller(mode)
    out = m(np.zeros(64, np.complex64))
    assert out.shape == (64,) and out.dtype == np.complex64
    assert np.isfinite(out).all()
    assert m(np.ones((3, 64), np.complex64)).shape == (3, 64)
    with pytest.raises(ValueError):
        m(np.zeros(63, np.complex64))


def test_unknown_iq_mode():
    with pytest.raises(ValueError):
        Canceller("complex")


def test_split_iq_treats_axes_alike():
    # one shared network: swapping I and Q of the input swaps them in the output
    m = Canceller("split_iq", seed=3)
    x = toy_split(5).corrupted
    a, b = m(x), m(x.imag + 1j * x.real)
    np.testing.assert_array_equal(a.real, b.imag)
    np.testing.assert_array_equal(a.imag, b.real)


def test_batch_invariance_is_bitwise():
    m = Canceller(seed=1)
    x = toy_split(INFER_CHUNK + 9, seed=2).corrupted
    full = m(x)
    for i in (0, 17, INFER_CHUNK + 8):
        np.testing.assert_array_equal(m(x[i]), full[i])
    np.testing.assert_array_equal(m(x[::-1])[::-1], full)


def test_zero_epochs_keeps_initialization():
    d = toy_split(4)
    res = train(d, d, TrainConfig(epochs=0, seed=5))
    fresh = Canceller(seed=5)
    for k, v in fresh.state_dict().items():
        np.testing.assert_array_equal(res.model.state_dict()[k], v)
    assert len(res.history) == 1
    assert res.history[0]["val_loss"] == eval_loss(fresh, d)


def test_training_is_deterministic():
    d, v = toy_split(8), toy_split(2, seed=9)
    cfg = TrainConfig(epochs=2, batch_size=4, seed=11)
    a, b = train(d, v, cfg), train(d, v, cfg)
    assert [r["val_loss"] for r in a.history] == [r["val_loss"] for r in b.history]
    assert [r["train_loss"] for r in a.history[1:]] == [r["train_loss"] for r in b.history[1:]]
    other = train(d, v, TrainConfig(epochs=2, batch_size=4, seed=12))
    assert other.history[-1]["val_loss"] != a.history[-1]["val_loss"]


def test_best_checkpoint_is_kept():
    d, v = toy_split(8), toy_split(2, seed=9)
    res = train(d, v, TrainConfig(epochs=3, batch_size=4, lr=5e-2, schedule="constant"))
    best = [r["best_val_loss"] for r in res.history]
    assert best == sorted(best, reverse=True)
    assert eval_loss(res.model, v) == pytest.approx(min(r["val_loss"] for r in res.history), rel=1e-12)


def test_overfit_fixed_blocks():
    d = toy_split(32, seed=1)
    before = eval_loss(Canceller(), d)
    res = train(d, d, TrainConfig(epochs=150, batch_size=32, lr=3e-3, reshuffle=False, clean_fraction=0.0))
    assert eval_loss(res.model, d) < 0.1 * before


def test_early_stopping():
    d, v = toy_split(8), toy_split(2, seed=9)
    res = train(d, v, TrainConfig(epochs=50, batch_size=8, lr=1.0, schedule="constant", patience=2))
    assert len(res.history) < 51


def test_nan_loss_aborts():
    d = toy_split(4)
    bad = SplitArrays(d.corrupted.copy(), d.clean.copy(), d.frame_ids)
    bad.clean[0, 0] = np.nan
    with pytest.raises(NonFiniteError):
        train(bad, d, TrainConfig(epochs=1))


def test_empty_split_rejected():
    d = toy_split(4)
    empty = d.subset(slice(0, 0))
    with pytest.raises(ValueError):
        train(empty, d, TrainConfig(epochs=1))
    with pytest.raises(ValueError):
        evaluate(IdentityCanceller(), empty, C16)


def test_train_config_validation():
    for kw in (dict(epochs=-1), dict(batch_size=0), dict(lr=0), dict(iq_mode="x"), dict(schedule="step"),
               dict(clean_fraction=1.0), dict(clean_fraction=-0.1)):
        with pytest.raises(ValueError):
            TrainConfig(**kw)


def test_lr_schedule_shape():
    cfg = TrainConfig(lr=1e-2)
    lrs = [lr_at(cfg, s, 100) for s in range(100)]
    assert max(lrs) == pytest.approx(1e-2)
    assert lrs[0] < 1e-3 and lrs[-1] < 1e-4
    assert lr_at(TrainConfig(lr=1e-2, schedule="constant"), 50, 100) == 1e-2


def test_reblock_is_a_joint_permutation():
    d = toy_split(6)
    y, x = reblock(d, np.random.default_rng(0))
    assert y.shape == d.corrupted.shape
    # pairs travel together
    pairs = sorted(zip(d.corrupted.ravel().tolist(), d.clean.ravel().tolist()), key=repr)
    assert sorted(zip(y.ravel().tolist(), x.ravel().tolist()), key=repr) == pairs


def test_identity_evaluation():
    d = toy_split(6, amp=0.45)
    rep = evaluate(IdentityCanceller(), d, C16)
    assert rep.ser_after == rep.ser_before > 0
    np.testing.assert_array_equal(rep.frame_ser_after, rep.frame_ser_before)
    assert rep.frame_ids.tolist() == [0, 1, 2]
    assert rep.n_symbols == 6 * 64
    ref = np.mean(demap_hard(d.corrupted, C16) != demap_hard(d.clean, C16))
    assert rep.ser_before == ref
    assert np.mean(rep.frame_ser_before) == pytest.approx(ref)


def test_no_interference_means_zero_baseline():
    d = toy_split(4, amp=0.0)
    assert evaluate(Canceller(), d, C16).ser_before == 0.0


def test_dump_constellation(tmp_path):
    d = toy_split(4)
    path = tmp_path / "c.csv"
    assert dump_constellation(Canceller(), d, 3, path) == 3 * 64
    rows = np.loadtxt(path, delimiter=",", skiprows=1)
    assert rows.shape == (192, 6)
    clean = rows[:, 4] + 1j * rows[:, 5]
    assert np.min(np.abs(clean[:, None] - C16.points[None]), axis=1).max() < 1e-6
    np.testing.assert_allclose(rows[:, 0] + 1j * rows[:, 1], d.corrupted[:3].ravel(), atol=1e-7)


@pytest.mark.parametrize("mode", ["split_iq", "stacked_iq"])
def test_checkpoint_round_trip(tmp_path, mode):
    d = toy_split(4)
    m = train(d, d, TrainConfig(epochs=1, batch_size=2, iq_mode=mode)).model
    p = tmp_path / "m.dicm"
    save_checkpoint(m, p)
    back = load_checkpoint(p)
    assert back.iq_mode == mode
    assert back.metadata == m.metadata and back.metadata["epochs_run"] == "1"
    np.testing.assert_array_equal(back(d.corrupted), m(d.corrupted))
    save_checkpoint(back, tmp_path / "again.dicm")
    assert (tmp_path / "again.dicm").read_bytes() == p.read_bytes()


def test_checkpoint_rejects_damage(tmp_path):
    p = tmp_path / "m.dicm"
    save_checkpoint(Canceller(), p)
    raw = p.read_bytes()
    cases = {
        "magic": b"XXXX" + raw[4:],
        "truncated": raw[: len(raw) // 2],
        "tiny": raw[:5],
        "flipped": raw[:200] + bytes([raw[200] ^ 1]) + raw[201:],
        "version": raw[:4] + b"\x07" + raw[5:],
    }
    for name, blob in cases.items():
        p.write_bytes(blob)
        with pytest.raises(CheckpointError):
            load_checkpoint(p)


def test_checkpoint_name_mismatch(tmp_path):
    m = Canceller()
    m.load_state_dict(m.state_dict())
    state = m.state_dict()
    state.pop("conv4.bias")
    with pytest.raises(ValueError):
        m.load_state_dict(state)


def test_untrained_loss_is_order_one():
    d = toy_split(4)
    assert 0.1 < eval_loss(Canceller(), d) < 10 and math.isfinite(eval_loss(Canceller("split_iq"), d))
