"""Flat binary parameter checkpoints.

Layout, all integers little-endian:

    magic            6 bytes  "PCUPv1"
    id length        u64      followed by that many utf-8 bytes (network id)
    k1, k2, width,
    rdb_layers,
    rdb_growth,
    m, rate          i64 each
    epsilon          f64
    stage count      u64      followed by that many i64 stage widths
    parameter count  u64
    per parameter:
        name length  u64      followed by utf-8 name bytes
        rank         u64
        dims         u64 each
        data         float32 little-endian, C order

Round-trips are bit-exact; loading restores parameters in file order with
fresh optimizer state.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import IncompatibleCheckpoint, IoError, KTooLarge
from .nets import NetworkConfig, ParameterStore

MAGIC = b"PCUPv1"


def save_checkpoint(path, store: ParameterStore, network_id: str, cfg: NetworkConfig):
    """Write parameters plus the configuration they were built for."""
    blob = bytearray()
    blob += MAGIC
    ident = network_id.encode("utf-8")
    blob += struct.pack("<Q", len(ident)) + ident
    blob += struct.pack(
        "<7q", cfg.k1, cfg.k2, cfg.width, cfg.rdb_layers, cfg.rdb_growth, cfg.m, cfg.rate
    )
    blob += struct.pack("<d", cfg.epsilon)
    blob += struct.pack("<Q", len(cfg.dlai_channels))
    blob += struct.pack(f"<{len(cfg.dlai_channels)}q", *cfg.dlai_channels)
    names = store.names()
    blob += struct.pack("<Q", len(names))
    for name in names:
        arr = store[name]
        nb = name.encode("utf-8")
        blob += struct.pack("<Q", len(nb)) + nb
        blob += struct.pack("<Q", arr.ndim)
        blob += struct.pack(f"<{arr.ndim}Q", *arr.shape)
        blob += np.ascontiguousarray(arr, dtype="<f4").tobytes()
    try:
        Path(path).write_bytes(bytes(blob))
    except OSError as e:
        raise IoError(f"cannot write checkpoint {path}: {e}") from e


class _Reader:
    def __init__(self, data: bytes, path):
        self.data = data
        self.off = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.off + n > len(self.data):
            raise IncompatibleCheckpoint(f"{self.path}: truncated checkpoint")
        piece = self.data[self.off:self.off + n]
        self.off += n
        return piece

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]

    def i64(self) -> int:
        return struct.unpack("<q", self.take(8))[0]

    def f64(self) -> float:
        return struct.unpack("<d", self.take(8))[0]


def load_checkpoint(path) -> tuple[ParameterStore, str, NetworkConfig]:
    """Read a checkpoint back: (parameters, network id, config)."""
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        raise IoError(f"cannot read checkpoint {path}: {e}") from e
    r = _Reader(data, path)
    if r.take(6) != MAGIC:
        raise IncompatibleCheckpoint(f"{path}: not a parameter checkpoint")
    network_id = r.take(r.u64()).decode("utf-8")
    k1, k2, width, rdb_layers, rdb_growth, m, rate = (r.i64() for _ in range(7))
    epsilon = r.f64()
    channels = tuple(r.i64() for _ in range(r.u64()))
    try:
        cfg = NetworkConfig(k1=k1, k2=k2, width=width, dlai_channels=channels,
                            rdb_layers=rdb_layers, rdb_growth=rdb_growth,
                            m=m, rate=rate, epsilon=epsilon)
    except (ValueError, KTooLarge) as e:
        raise IncompatibleCheckpoint(f"{path}: bad configuration ({e})") from e
    store = ParameterStore()
    for _ in range(r.u64()):
        name = r.take(r.u64()).decode("utf-8")
        rank = r.u64()
        dims = tuple(r.u64() for _ in range(rank))
        count = int(np.prod(dims, dtype=np.int64)) if dims else 1
        raw = r.take(count * 4)
        arr = np.frombuffer(raw, dtype="<f4").reshape(dims).astype(np.float32)
        store.add(name, arr)
    if r.off != len(data):
        raise IncompatibleCheckpoint(f"{path}: trailing bytes after parameters")
    return store, network_id, cfg
