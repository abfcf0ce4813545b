"""Convolutional LSTM autoencoder that removes co-channel interference from
length-64 symbol blocks, plus its training loop, evaluation and checkpoints.

Layer stack (kernel 3 convolutions use zero "same" padding)::

    Conv1  conv(c_in->32)+BN+ReLU, conv(32->32)+BN+ReLU
    Conv2  conv(32->64)+BN+ReLU,   conv(64->64)+BN+ReLU
    LSTM1..4  64->32->16->32->64 over the 64 symbol positions
    Conv3  conv(64->32)+BN+ReLU,   conv(32->32)+BN+ReLU
    Conv4  conv(32->c_in), kernel 1

``c_in`` is 1 in ``split_iq`` mode (I and Q rows pass separately through the
same network) and 2 in ``stacked_iq`` mode (I and Q as two channels).
"""
from __future__ import annotations

import csv
import logging
import math
import struct
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .constellation import QamConstellation, demap_hard
from .dataset import BLOCK_LEN, SplitArrays
from .nncore import (
    DTYPE,
    LSTM,
    Adam,
    BatchNorm1d,
    Conv1d,
    NonFiniteError,
    ReLU,
    Sequential,
    SwapAxes,
    check_finite,
    clip_grad_norm,
    mse_loss,
)

log = logging.getLogger(__name__)

IQ_MODES = ("split_iq", "stacked_iq")
LSTM_SIZES = ((64, 32), (32, 16), (16, 32), (32, 64))
INFER_CHUNK = 64  # blocks per inference pass; fixed so results never depend on batch size


def _conv_stage(name, chans, rng):
    layers = []
    for k, (i, o) in enumerate(zip(chans, chans[1:])):
        tag = f"{name}{'ab'[k]}"
        layers += [
            (f"{tag}.conv", Conv1d(i, o, 3, rng=rng)),
            (f"{tag}.bn", BatchNorm1d(o)),
            (f"{tag}.relu", ReLU()),
        ]
    return layers


def build_network(in_channels: int, seed: int = 0) -> Sequential:
    rng = np.random.default_rng(seed)
    layers = _conv_stage("conv1", (in_channels, 32, 32), rng)
    layers += _conv_stage("conv2", (32, 64, 64), rng)
    layers.append(("to_seq", SwapAxes()))
    for k, (i, h) in enumerate(LSTM_SIZES, start=1):
        layers.append((f"lstm{k}", LSTM(i, h, rng=rng)))
    layers.append(("to_chan", SwapAxes()))
    layers += _conv_stage("conv3", (64, 32, 32), rng)
    layers.append(("conv4", Conv1d(32, in_channels, 1, rng=rng)))
    net = Sequential(layers)
    for _, m in net.layers:
        if isinstance(m, BatchNorm1d):
            m.reset_running_stats()
    _check_architecture(net, in_channels)
    return net


def _check_architecture(net: Sequential, in_channels: int):
    """Walk the layer chain and confirm every layer accepts what the previous one emits."""
    width = in_channels
    for name, m in net.layers:
        if isinstance(m, Conv1d):
            need, out = m.in_channels, m.out_channels
        elif isinstance(m, LSTM):
            need, out = m.in_features, m.hidden
        elif isinstance(m, BatchNorm1d):
            need = out = m.channels
        else:
            continue
        if need != width:
            raise AssertionError(f"{name}: expects {need} features, receives {width}")
        width = out
    if width != in_channels:
        raise AssertionError("network output width must equal its input width")


def to_real(blocks: np.ndarray, iq_mode: str) -> np.ndarray:
    """Complex ``[n, 64]`` blocks -> real network input."""
    if iq_mode == "split_iq":
        return np.concatenate([blocks.real, blocks.imag]).astype(DTYPE)[:, None, :]
    return np.stack([blocks.real, blocks.imag], axis=1).astype(DTYPE)


def from_real(out: np.ndarray, iq_mode: str) -> np.ndarray:
    if iq_mode == "split_iq":
        n = out.shape[0] // 2
        return (out[:n, 0] + 1j * out[n:, 0]).astype(np.complex64)
    return (out[:, 0] + 1j * out[:, 1]).astype(np.complex64)


class Canceller:
    def __init__(self, iq_mode: str = "stacked_iq", seed: int = 0):
        if iq_mode not in IQ_MODES:
            raise ValueError(f"iq_mode must be one of {IQ_MODES}, got {iq_mode!r}")
        self.iq_mode = iq_mode
        self.net = build_network(1 if iq_mode == "split_iq" else 2, seed)
        self.metadata: dict[str, str] = {}

    @property
    def in_channels(self) -> int:
        return 1 if self.iq_mode == "split_iq" else 2

    def parameters(self):
        return self.net.parameters()

    def state_dict(self) -> dict[str, np.ndarray]:
        state = {k: p.data.copy() for k, p in self.net.parameters().items()}
        state.update({k: v.copy() for k, v in self.net.buffers().items()})
        return state

    def load_state_dict(self, state: dict[str, np.ndarray]):
        params = self.net.parameters()
        expected = set(params) | set(self.net.buffers())
        if set(state) != expected:
            raise ValueError(f"state mismatch: missing {expected - set(state)}, extra {set(state) - expected}")
        for k, p in params.items():
            if state[k].shape != p.shape:
                raise ValueError(f"{k}: shape {state[k].shape} != {p.shape}")
            p.data[...] = state[k]
        for name, m in self.net.layers:
            if isinstance(m, BatchNorm1d):
                m.running_mean = np.array(state[f"{name}.running_mean"], DTYPE)
                m.running_var = np.array(state[f"{name}.running_var"], DTYPE)

    def forward_real(self, x: np.ndarray) -> np.ndarray:
        """Inference on real network input, in fixed-size zero-padded chunks."""
        self.net.eval()
        out = np.empty_like(x)
        for s in range(0, len(x), INFER_CHUNK):
            chunk = x[s : s + INFER_CHUNK]
            n = len(chunk)
            if n < INFER_CHUNK:
                chunk = np.concatenate([chunk, np.zeros((INFER_CHUNK - n,) + x.shape[1:], x.dtype)])
            out[s : s + n] = self._run(chunk)[:n]
        return out

    def _run(self, chunk):
        return self.net(chunk)

    def __call__(self, blocks):
        """Recovered symbols for complex blocks ``[n, 64]`` (or one block ``[64]``)."""
        blocks = np.asarray(blocks)
        single = blocks.ndim == 1
        b2 = blocks[None] if single else blocks
        if b2.ndim != 2 or b2.shape[1] != BLOCK_LEN:
            raise ValueError(f"expected blocks of {BLOCK_LEN} symbols, got shape {blocks.shape}")
        out = from_real(self.forward_real(to_real(b2, self.iq_mode)), self.iq_mode)
        return out[0] if single else out


class IdentityCanceller:
    """Diagnostic stand-in that returns its input unchanged."""

    iq_mode = "identity"

    def __call__(self, blocks):
        return np.asarray(blocks).astype(np.complex64)


def parameter_count(model: Canceller) -> int:
    """Trainable parameters plus batch-norm running statistics."""
    n = sum(p.size for p in model.parameters().values())
    return n + sum(v.size for v in model.net.buffers().values())


# --------------------------------------------------------------------- training


@dataclass
class TrainConfig:
    epochs: int = 400
    batch_size: int = 32
    lr: float = 5e-3
    seed: int = 0
    patience: int = 0  # 0 disables early stopping
    iq_mode: str = "stacked_iq"
    clip_norm: float = 5.0
    reshuffle: bool = True  # re-block the training REs every epoch
    clean_fraction: float = 0.1  # share of training blocks shown without interference each epoch
    schedule: str = "onecycle"  # or "constant"

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size <= 0 or self.lr <= 0 or self.patience < 0:
            raise ValueError("epochs/patience must be >= 0, batch_size and lr > 0")
        if self.iq_mode not in IQ_MODES:
            raise ValueError(f"iq_mode must be one of {IQ_MODES}")
        if not 0.0 <= self.clean_fraction < 1.0:
            raise ValueError("clean_fraction must lie in [0, 1)")
        if self.schedule not in ("onecycle", "constant"):
            raise ValueError(f"unknown schedule {self.schedule!r}")


def lr_at(cfg: TrainConfig, step: int, total: int) -> float:
    """One-cycle: linear warm-up over the first 30 % of steps, then cosine decay."""
    if cfg.schedule == "constant" or total <= 1:
        return cfg.lr
    warm = max(1, int(0.3 * total))
    if step < warm:
        return cfg.lr * (0.04 + 0.96 * step / warm)
    frac = (step - warm) / max(1, total - warm)
    return cfg.lr * (1e-4 + (1 - 1e-4) * 0.5 * (1 + math.cos(math.pi * frac)))


def reblock(data: SplitArrays, rng) -> tuple[np.ndarray, np.ndarray]:
    """Shuffle all REs of a split and cut them into fresh blocks.

    The symbols of a block are independent, so a new permutation every epoch
    gives the network new sequences and stops it memorizing block context.
    """
    perm = rng.permutation(data.corrupted.size)
    shape = data.corrupted.shape
    return data.corrupted.reshape(-1)[perm].reshape(shape), data.clean.reshape(-1)[perm].reshape(shape)


def eval_loss(model: Canceller, data: SplitArrays) -> float:
    if len(data) == 0:
        raise ValueError("cannot evaluate on an empty split")
    pred = model.forward_real(to_real(data.corrupted, model.iq_mode))
    return mse_loss(pred, to_real(data.clean, model.iq_mode))[0]


@dataclass
class TrainResult:
    model: Canceller
    history: list[dict] = field(default_factory=list)

    @property
    def best_val_loss(self) -> float:
        return min(r["val_loss"] for r in self.history)


def train(train_data: SplitArrays, val_data: SplitArrays, cfg: TrainConfig, progress=None) -> TrainResult:
    """Minimize block MSE with Adam; keeps the parameters of the best validation epoch."""
    if len(train_data) == 0 or len(val_data) == 0:
        raise ValueError("training needs non-empty train and validation splits")
    rng = np.random.default_rng(cfg.seed)
    model = Canceller(cfg.iq_mode, seed=cfg.seed)
    params = model.parameters()
    opt = Adam(params, lr=cfg.lr)
    plist = list(params.values())

    val0 = eval_loss(model, val_data)
    history = [dict(epoch=0, train_loss=math.nan, val_loss=val0, best_val_loss=val0, lr=0.0)]
    best, best_state, since_best = val0, model.state_dict(), 0
    n = len(train_data)
    steps_per_epoch = -(-n // cfg.batch_size)
    total = cfg.epochs * steps_per_epoch
    step = 0
    for epoch in range(1, cfg.epochs + 1):
        if cfg.reshuffle:
            ys, xs = reblock(train_data, rng)
        else:
            ys, xs = train_data.corrupted, train_data.clean
        if cfg.clean_fraction:
            # interference-free blocks teach the network to leave clean symbols alone
            ys = ys.copy()
            pick = rng.random(n) < cfg.clean_fraction
            ys[pick] = xs[pick]
        order = rng.permutation(n)
        model.net.train()
        losses = []
        for s in range(0, n, cfg.batch_size):
            idx = order[s : s + cfg.batch_size]
            opt.lr = lr_at(cfg, step, total)
            opt.zero_grad()
            out = model.net(to_real(ys[idx], cfg.iq_mode))
            loss, grad = mse_loss(out, to_real(xs[idx], cfg.iq_mode))
            if not math.isfinite(loss):
                raise NonFiniteError(f"loss became {loss} at epoch {epoch}, step {step}")
            model.net.backward(grad)
            clip_grad_norm(plist, cfg.clip_norm)
            opt.step()
            losses.append(loss)
            step += 1
        val = eval_loss(model, val_data)
        if val < best:
            best, best_state, since_best = val, model.state_dict(), 0
        else:
            since_best += 1
        row = dict(epoch=epoch, train_loss=float(np.mean(losses)), val_loss=val, best_val_loss=best, lr=opt.lr)
        history.append(row)
        log.info("epoch %d train %.5f val %.5f best %.5f", epoch, row["train_loss"], val, best)
        if progress is not None:
            progress(row)
        if cfg.patience and since_best >= cfg.patience:
            log.info("early stop after %d epochs without improvement", since_best)
            break
    model.load_state_dict(best_state)
    model.metadata = {
        **{k: str(v) for k, v in asdict(cfg).items()},
        "epochs_run": str(history[-1]["epoch"]),
        "best_val_loss": repr(best),
    }
    return TrainResult(model, history)


def write_loss_curve(history, path):
    cols = ["epoch", "train_loss", "val_loss", "best_val_loss", "lr"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for row in history:
            w.writerow([row["epoch"]] + [repr(float(row[c])) for c in cols[1:]])


# ------------------------------------------------------------------- evaluation


@dataclass
class EvalReport:
    ser_before: float
    ser_after: float
    frame_ids: np.ndarray
    frame_ser_before: np.ndarray
    frame_ser_after: np.ndarray
    n_symbols: int


def recover(model, corrupted: np.ndarray) -> np.ndarray:
    out = model(corrupted)
    return check_finite(out, "canceller output")


def evaluate(model, data: SplitArrays, c: QamConstellation) -> EvalReport:
    """SER of hard decisions before and after the canceller, overall and per frame."""
    if len(data) == 0:
        raise ValueError("cannot evaluate on an empty split")
    tx = demap_hard(data.clean, c)
    err_before = demap_hard(data.corrupted, c) != tx
    err_after = demap_hard(recover(model, data.corrupted), c) != tx
    frames = np.unique(data.frame_ids)
    per_b = np.array([err_before[data.frame_ids == f].mean() for f in frames])
    per_a = np.array([err_after[data.frame_ids == f].mean() for f in frames])
    return EvalReport(
        ser_before=float(err_before.mean()),
        ser_after=float(err_after.mean()),
        frame_ids=frames,
        frame_ser_before=per_b,
        frame_ser_after=per_a,
        n_symbols=int(tx.size),
    )


def dump_constellation(model, data: SplitArrays, n_blocks: int, path) -> int:
    """Write aligned corrupted / recovered / clean points of the first ``n_blocks`` blocks."""
    sub = data.subset(slice(0, n_blocks))
    rec = recover(model, sub.corrupted).reshape(-1)
    y, x = sub.corrupted.reshape(-1), sub.clean.reshape(-1)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["corrupted_i", "corrupted_q", "recovered_i", "recovered_q", "clean_i", "clean_q"])
        for a, b, cc in zip(y, rec, x):
            w.writerow([repr(float(v)) for v in (a.real, a.imag, b.real, b.imag, cc.real, cc.imag)])
    return len(y)


# ------------------------------------------------------------------- checkpoint

CKPT_MAGIC = b"DICM"
CKPT_VERSION = 1


class CheckpointError(ValueError):
    pass


def _pack_text(fh, text: str):
    raw = text.encode()
    fh.append(struct.pack("<q", len(raw)) + raw)


def save_checkpoint(model: Canceller, path):
    """Layout: magic, uint16 version, uint8 iq mode, metadata text, records, CRC-32.

    Each record: int64 name length, name, int64 rank, int64 dims, float32 payload.
    """
    parts: list[bytes] = []
    meta = "".join(f"{k}={v}\n" for k, v in sorted(model.metadata.items()))
    _pack_text(parts, meta)
    state = model.state_dict()
    parts.append(struct.pack("<q", len(state)))
    for name in sorted(state):
        arr = np.ascontiguousarray(state[name], dtype="<f4")
        raw = name.encode()
        parts.append(struct.pack("<q", len(raw)) + raw)
        parts.append(struct.pack(f"<q{arr.ndim}q", arr.ndim, *arr.shape))
        parts.append(arr.tobytes())
    body = b"".join(parts)
    head = CKPT_MAGIC + struct.pack("<HB", CKPT_VERSION, IQ_MODES.index(model.iq_mode))
    Path(path).write_bytes(head + body + struct.pack("<I", zlib.crc32(head[4:] + body)))


def load_checkpoint(path) -> Canceller:
    raw = Path(path).read_bytes()
    if len(raw) < 11 or raw[:4] != CKPT_MAGIC:
        raise CheckpointError("not a DICM checkpoint")
    version, mode = struct.unpack_from("<HB", raw, 4)
    if version != CKPT_VERSION:
        raise CheckpointError(f"checkpoint version {version} != supported {CKPT_VERSION}")
    (crc,) = struct.unpack_from("<I", raw, len(raw) - 4)
    if zlib.crc32(raw[4:-4]) != crc:
        raise CheckpointError("checkpoint CRC mismatch (corrupt or truncated)")
    if mode >= len(IQ_MODES):
        raise CheckpointError(f"unknown iq mode byte {mode}")
    pos = 7
    end = len(raw) - 4

    def take(n):
        nonlocal pos
        if n < 0 or pos + n > end:
            raise CheckpointError("record runs past end of checkpoint")
        out = raw[pos : pos + n]
        pos += n
        return out

    def take_int():
        return struct.unpack("<q", take(8))[0]

    meta = take(take_int()).decode()
    state = {}
    for _ in range(take_int()):
        name = take(take_int()).decode()
        rank = take_int()
        if not 0 <= rank <= 8:
            raise CheckpointError(f"{name}: implausible rank {rank}")
        shape = tuple(take_int() for _ in range(rank))
        count = int(np.prod(shape)) if shape else 1
        state[name] = np.frombuffer(take(4 * count), dtype="<f4").reshape(shape).astype(DTYPE)
    if pos != end:
        raise CheckpointError("trailing bytes after last record")
    model = Canceller(IQ_MODES[mode])
    try:
        model.load_state_dict(state)
    except ValueError as e:
        raise CheckpointError(str(e)) from None
    model.metadata = dict(line.split("=", 1) for line in meta.splitlines() if line)
    return model
