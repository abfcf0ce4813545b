"""Frame corpus generation, length-64 blocking and the ``DIC1`` split files.

Layout of one split file (all little-endian)::

    b"DIC1"  uint16 version
    header   int64 x len(HEADER_INTS), float64 x len(HEADER_FLOATS)
    frames   n_frames x (corrupted grid, clean grid); each RE is float32 I, float32 Q,
             row-major over (subframe, ofdm_symbol, subcarrier)
    footer   uint32 CRC-32 of header + frames
"""
from __future__ import annotations

import math
import struct
import zlib
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator

import numpy as np

from .channel import GainScope, InterferenceConfig, NoiseConfig, apply_awgn, apply_interference
from .constellation import build_constellation
from .phy import GridDims, OfdmConfig, ResourceGrid, fill_grid_random, ofdm_demodulate, ofdm_modulate

MAGIC = b"DIC1"
VERSION = 1
BLOCK_LEN = 64
SPLITS = ("train", "val", "test")
MANIFEST_NAME = "manifest.txt"

HEADER_INTS = (
    "split", "first_frame", "n_frames",
    "total_frames", "train_frames", "val_frames", "test_frames",
    "subframes", "ofdm_symbols", "subcarriers",
    "qam_order", "interferer_order", "gain_scope", "seed", "noise_on",
    "fft_size", "cp_length",
)  # fmt: skip
HEADER_FLOATS = ("sir_db", "snr_db")
_HEADER = struct.Struct("<" + "q" * len(HEADER_INTS) + "d" * len(HEADER_FLOATS))
_PREFIX = struct.Struct("<4sH")
_FOOTER = struct.Struct("<I")
_RE = np.dtype("<c8")  # float32 I then float32 Q


class DatasetError(ValueError):
    pass


class VersionMismatchError(DatasetError):
    pass


class CorruptPayloadError(DatasetError):
    pass


@dataclass(frozen=True)
class SymbolBlock:
    corrupted: np.ndarray
    clean: np.ndarray
    frame_id: int
    block_id: int

    def __post_init__(self):
        for name in ("corrupted", "clean"):
            v = getattr(self, name)
            if v.shape != (BLOCK_LEN,) or not np.all(np.isfinite(v)):
                raise ValueError(f"{name} must be {BLOCK_LEN} finite complex values")


def ofdm_config_for(dims: GridDims) -> OfdmConfig:
    fft = 256
    while fft < dims.subcarriers + 1:
        fft *= 2
    return OfdmConfig(fft_size=fft, cp_length=fft * 18 // 256, active_subcarriers=dims.subcarriers)


@dataclass(frozen=True)
class DatasetManifest:
    total_frames: int = 1000
    train_frames: int = 500
    val_frames: int = 100
    test_frames: int = 400
    dims: GridDims = field(default_factory=GridDims)
    qam_order: int = 256
    interference: InterferenceConfig = field(
        default_factory=lambda: InterferenceConfig(sir_db=math.inf, interferer_order=256)
    )
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    seed: int = 0
    version: int = VERSION

    def __post_init__(self):
        counts = (self.train_frames, self.val_frames, self.test_frames)
        if min(counts) < 0 or self.total_frames <= 0:
            raise ValueError("frame counts must be non-negative and total positive")
        if sum(counts) != self.total_frames:
            raise ValueError(
                f"train+val+test = {sum(counts)} does not equal total_frames = {self.total_frames}"
            )
        build_constellation(self.qam_order)
        if self.version != VERSION:
            raise VersionMismatchError(f"unsupported dataset version {self.version}")

    @property
    def ofdm(self) -> OfdmConfig:
        return ofdm_config_for(self.dims)

    def split_range(self, split: str) -> range:
        if split not in SPLITS:
            raise ValueError(f"unknown split {split!r}")
        a = self.train_frames
        b = a + self.val_frames
        return {"train": range(0, a), "val": range(a, b), "test": range(b, self.total_frames)}[split]

    def to_text(self) -> str:
        ic, d = self.interference, self.dims
        rows = [
            ("version", self.version),
            ("total_frames", self.total_frames),
            ("train_frames", self.train_frames),
            ("val_frames", self.val_frames),
            ("test_frames", self.test_frames),
            ("subframes", d.subframes),
            ("ofdm_symbols", d.ofdm_symbols_per_subframe),
            ("subcarriers", d.subcarriers),
            ("qam_order", self.qam_order),
            ("interferer_order", ic.interferer_order),
            ("sir_db", repr(float(ic.sir_db))),
            ("gain_scope", ic.gain_scope.name.lower()),
            ("interference_seed", ic.seed),
            ("snr_db", "off" if self.noise.snr_db is None else repr(float(self.noise.snr_db))),
            ("seed", self.seed),
            ("fft_size", self.ofdm.fft_size),
            ("cp_length", self.ofdm.cp_length),
        ]
        return "".join(f"{k}={v}\n" for k, v in rows)

    @classmethod
    def from_text(cls, text: str) -> "DatasetManifest":
        kv = dict(line.split("=", 1) for line in text.splitlines() if line.strip())
        snr = kv["snr_db"]
        return cls(
            total_frames=int(kv["total_frames"]),
            train_frames=int(kv["train_frames"]),
            val_frames=int(kv["val_frames"]),
            test_frames=int(kv["test_frames"]),
            dims=GridDims(int(kv["subframes"]), int(kv["ofdm_symbols"]), int(kv["subcarriers"])),
            qam_order=int(kv["qam_order"]),
            interference=InterferenceConfig(
                sir_db=float(kv["sir_db"]),
                interferer_order=int(kv["interferer_order"]),
                gain_scope=GainScope.parse(kv["gain_scope"]),
                seed=int(kv["interference_seed"]),
            ),
            noise=NoiseConfig(None if snr == "off" else float(snr)),
            seed=int(kv["seed"]),
            version=int(kv["version"]),
        )


def frame_seed(seed: int, frame_id: int) -> int:
    return seed ^ frame_id


def simulate_frame(manifest: DatasetManifest, frame_id: int):
    """Clean and received grids of one frame through the ideal OFDM link."""
    c = build_constellation(manifest.qam_order)
    fs = frame_seed(manifest.seed, frame_id)
    clean, _ = fill_grid_random(manifest.dims, c, fs)
    cfg = manifest.ofdm
    rx = ofdm_demodulate(ofdm_modulate(clean, cfg), cfg, manifest.dims)
    rx, _ = apply_interference(rx, manifest.interference, frame_id)
    rx = apply_awgn(rx, manifest.noise, fs)
    return rx, clean


def _header_bytes(manifest: DatasetManifest, split: str) -> bytes:
    r = manifest.split_range(split)
    ic, d, cfg = manifest.interference, manifest.dims, manifest.ofdm
    ints = (
        SPLITS.index(split), r.start, len(r),
        manifest.total_frames, manifest.train_frames, manifest.val_frames, manifest.test_frames,
        d.subframes, d.ofdm_symbols_per_subframe, d.subcarriers,
        manifest.qam_order, ic.interferer_order, int(ic.gain_scope), manifest.seed,
        int(manifest.noise.enabled), cfg.fft_size, cfg.cp_length,
    )  # fmt: skip
    snr = manifest.noise.snr_db if manifest.noise.enabled else math.nan
    return _HEADER.pack(*ints, float(ic.sir_db), float(snr))


def generate_dataset(manifest: DatasetManifest, out_dir) -> dict[str, Path]:
    """Simulate every frame and write ``train.dic``, ``val.dic``, ``test.dic`` and the manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}
    for split in SPLITS:
        path = out / f"{split}.dic"
        header = _header_bytes(manifest, split)
        crc = zlib.crc32(header)
        with open(path, "wb") as fh:
            fh.write(_PREFIX.pack(MAGIC, manifest.version))
            fh.write(header)
            for frame_id in manifest.split_range(split):
                rx, clean = simulate_frame(manifest, frame_id)
                for grid in (rx, clean):
                    payload = grid.data.astype(_RE).tobytes()
                    crc = zlib.crc32(payload, crc)
                    fh.write(payload)
            fh.write(_FOOTER.pack(crc))
        paths[split] = path
    (out / MANIFEST_NAME).write_text(manifest.to_text())
    return paths


def read_manifest(data_dir) -> DatasetManifest:
    return DatasetManifest.from_text((Path(data_dir) / MANIFEST_NAME).read_text())


def _split_path(path, split: str) -> Path:
    if split not in SPLITS:
        raise ValueError(f"unknown split {split!r}")
    p = Path(path)
    return p / f"{split}.dic" if p.is_dir() else p


def read_header(fh) -> dict:
    raw = fh.read(_PREFIX.size)
    if len(raw) < _PREFIX.size:
        raise CorruptPayloadError("file too short for a DIC1 header")
    magic, version = _PREFIX.unpack(raw)
    if magic != MAGIC:
        raise CorruptPayloadError(f"bad magic {magic!r}")
    if version != VERSION:
        raise VersionMismatchError(f"dataset version {version} != supported {VERSION}")
    raw = fh.read(_HEADER.size)
    if len(raw) < _HEADER.size:
        raise CorruptPayloadError("truncated header")
    values = _HEADER.unpack(raw)
    header = dict(zip(HEADER_INTS + HEADER_FLOATS, values))
    header["_raw"] = raw
    return header


def _verify(path: Path) -> dict:
    size = path.stat().st_size
    with open(path, "rb") as fh:
        header = read_header(fh)
        if header["split"] not in range(len(SPLITS)) or min(
            header["n_frames"], header["subframes"], header["ofdm_symbols"], header["subcarriers"]
        ) < 0:
            raise CorruptPayloadError("implausible header values")
        n_re = header["subframes"] * header["ofdm_symbols"] * header["subcarriers"]
        payload = 2 * header["n_frames"] * n_re * _RE.itemsize
        if size != _PREFIX.size + _HEADER.size + payload + _FOOTER.size:
            raise CorruptPayloadError(f"{path.name}: size {size} does not match header (truncated?)")
        crc = zlib.crc32(header["_raw"])
        remaining = payload
        while remaining:
            chunk = fh.read(min(remaining, 1 << 24))
            crc = zlib.crc32(chunk, crc)
            remaining -= len(chunk)
        (stored,) = _FOOTER.unpack(fh.read(_FOOTER.size))
        if stored != crc:
            raise CorruptPayloadError(f"{path.name}: CRC mismatch")
    header["dims"] = GridDims(header["subframes"], header["ofdm_symbols"], header["subcarriers"])
    return header


def iter_frames(path, split: str = "train"):
    """Yield ``(frame_id, corrupted, clean)`` grids after validating the file checksum."""
    p = _split_path(path, split)
    header = _verify(p)
    dims = header["dims"]
    n_re = dims.size
    with open(p, "rb") as fh:
        fh.seek(_PREFIX.size + _HEADER.size)
        for k in range(header["n_frames"]):
            a = np.frombuffer(fh.read(2 * n_re * _RE.itemsize), dtype=_RE)
            yield (
                header["first_frame"] + k,
                ResourceGrid(dims, a[:n_re].reshape(dims.shape)),
                ResourceGrid(dims, a[n_re:].reshape(dims.shape)),
            )


def blockify(corrupted: ResourceGrid, clean: ResourceGrid, frame_id: int = 0) -> list[SymbolBlock]:
    """Cut the row-major RE stream into length-64 blocks; a short tail is dropped."""
    if corrupted.dims != clean.dims:
        raise ValueError("corrupted and clean grids must share dims")
    y, x = block_arrays(corrupted.flat()), block_arrays(clean.flat())
    return [SymbolBlock(y[i], x[i], frame_id, i) for i in range(len(y))]


def block_arrays(stream: np.ndarray) -> np.ndarray:
    n = len(stream) // BLOCK_LEN
    return stream[: n * BLOCK_LEN].reshape(n, BLOCK_LEN)


def load_dataset(path, split: str) -> Iterator[SymbolBlock]:
    for frame_id, y, x in iter_frames(path, split):
        yield from blockify(y, x, frame_id)


@dataclass
class SplitArrays:
    """All blocks of one split as arrays, for batched training and evaluation."""

    corrupted: np.ndarray  # [n_blocks, 64] complex64
    clean: np.ndarray
    frame_ids: np.ndarray  # frame id of every block

    def __len__(self):
        return len(self.corrupted)

    def subset(self, idx):
        return replace(self, corrupted=self.corrupted[idx], clean=self.clean[idx], frame_ids=self.frame_ids[idx])


def load_split(path, split: str) -> SplitArrays:
    ys, xs, ids = [], [], []
    for frame_id, y, x in iter_frames(path, split):
        by, bx = block_arrays(y.flat()), block_arrays(x.flat())
        ys.append(by)
        xs.append(bx)
        ids.append(np.full(len(by), frame_id))
    if not ys:
        empty = np.zeros((0, BLOCK_LEN), np.complex64)
        return SplitArrays(empty, empty.copy(), np.zeros(0, int))
    return SplitArrays(np.concatenate(ys), np.concatenate(xs), np.concatenate(ids))
