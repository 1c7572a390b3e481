"""Single-file checkpoint container.

Layout (all integers little-endian)::

    b"SEWGPT01"               8-byte magic
    u32 version
    u32 n                     byte length of the config JSON
    n bytes                   config JSON (UTF-8)
    u32 count                 number of tensors
    count x (u32 name_len, name, u32 rank, rank x u32 dim, u64 offset)
    payload                   float32 data; offsets are relative to its start
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import CorruptCheckpoint, NotACheckpoint, UnsupportedVersion
from .model import ModelConfig, check_params

MAGIC = b"SEWGPT01"
VERSION = 1


def save_checkpoint(params: dict[str, np.ndarray], cfg: ModelConfig, path: str | Path,
                    extra: dict | None = None) -> None:
    """Write ``params`` and the config (plus optional ``extra`` metadata)."""
    check_params(params, cfg)
    meta = {"model": cfg.to_dict()}
    if extra:
        meta.update(extra)
    cfg_bytes = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    table = bytearray()
    blobs = []
    offset = 0
    for name, arr in params.items():
        data = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        enc = name.encode("utf-8")
        table += struct.pack("<I", len(enc)) + enc
        table += struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
        table += struct.pack("<Q", offset)
        blobs.append(data)
        offset += len(data)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(cfg_bytes)))
        fh.write(cfg_bytes)
        fh.write(struct.pack("<I", len(params)))
        fh.write(table)
        for blob in blobs:
            fh.write(blob)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf, self.pos = buf, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise CorruptCheckpoint("checkpoint ends inside its header")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def read_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], ModelConfig, dict]:
    """Return ``(params, model config, full config metadata)``."""
    buf = Path(path).read_bytes()
    if buf[:8] != MAGIC:
        raise NotACheckpoint(f"{path}: bad magic {buf[:8]!r}")
    r = _Reader(buf)
    r.take(8)
    version, n = r.unpack("<II")
    if version != VERSION:
        raise UnsupportedVersion(f"{path}: version {version}, this build reads {VERSION}")
    try:
        meta = json.loads(r.take(n).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptCheckpoint(f"{path}: unreadable config JSON") from exc
    (count,) = r.unpack("<I")
    entries = []
    for _ in range(count):
        (name_len,) = r.unpack("<I")
        name = r.take(name_len).decode("utf-8")
        (rank,) = r.unpack("<I")
        dims = r.unpack(f"<{rank}I")
        (offset,) = r.unpack("<Q")
        entries.append((name, dims, offset))
    base = r.pos
    params = {}
    for name, dims, offset in entries:
        size = int(np.prod(dims, dtype=np.int64)) * 4
        start = base + offset
        if start + size > len(buf):
            raise CorruptCheckpoint(f"{path}: payload for {name} is truncated")
        params[name] = np.frombuffer(buf, dtype="<f4", count=size // 4,
                                     offset=start).reshape(dims).astype(np.float32)
    cfg = ModelConfig.from_dict(meta["model"])
    check_params(params, cfg)
    return params, cfg, meta


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], ModelConfig]:
    params, cfg, _ = read_checkpoint(path)
    return params, cfg
