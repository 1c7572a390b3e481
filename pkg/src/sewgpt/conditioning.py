"""Caption embedding providers and the trainable projection into model space.

The external text encoder is not bundled. ``hashed_bow`` is a deterministic
bag-of-words stand-in, ``file_lookup`` reads precomputed vectors (for example
real CLIP embeddings) from a JSON map, and ``null`` yields zeros.
"""
from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import autograd as ag
from .errors import ConfigError, UnknownCaption

PROVIDER_KINDS = ("hashed_bow", "file_lookup", "null")
_WORD = re.compile(r"[a-z0-9]+")


@dataclass(frozen=True)
class ProviderSpec:
    kind: str = "hashed_bow"
    dim: int = 1024
    path: str | None = None

    def __post_init__(self):
        if self.kind not in PROVIDER_KINDS:
            raise ConfigError(f"unknown provider kind {self.kind!r}")
        if self.dim <= 0:
            raise ConfigError("provider dim must be positive")
        if self.kind == "file_lookup" and not self.path:
            raise ConfigError("file_lookup provider needs a path")


@dataclass(frozen=True)
class CondEmbedding:
    vectors: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.atleast_2d(np.asarray(self.vectors))
        if v.shape[0] < 1 or not np.all(np.isfinite(v)):
            raise ValueError("conditioning needs at least one finite row")
        object.__setattr__(self, "vectors", v)


def word_bucket(word: str, dim: int) -> int:
    h = int.from_bytes(hashlib.blake2b(word.encode("utf-8"), digest_size=8).digest(), "little")
    return h % dim


@lru_cache(maxsize=8)
def _lookup_table(path: str) -> dict[str, list[float]]:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def embed_caption(spec: ProviderSpec, caption: str | None) -> np.ndarray:
    out = np.zeros(spec.dim, dtype=np.float64)
    if spec.kind == "null" or caption is None:
        return out
    if spec.kind == "file_lookup":
        table = _lookup_table(str(Path(spec.path).resolve()))
        if caption not in table:
            raise UnknownCaption(caption)
        vec = np.asarray(table[caption], dtype=np.float64)
        if vec.shape != (spec.dim,):
            raise ConfigError(f"embedding for {caption!r} has shape {vec.shape}, want ({spec.dim},)")
        return vec
    for word in _WORD.findall(caption.lower()):
        out[word_bucket(word, spec.dim)] += 1.0
    norm = np.linalg.norm(out)
    return out / norm if norm > 0 else out


def project_rows(P: dict, raw) -> ag.Tensor:
    """Two-layer GELU MLP mapping raw caption vectors [B, d_in] to rows [B, 1, d_model]."""
    h = ag.gelu(ag.linear(raw, P["cond.w1"], P["cond.b1"]))
    out = ag.linear(h, P["cond.w2"], P["cond.b2"])
    return ag.reshape(out, (out.shape[0], 1, out.shape[1]))


def project_condition(params: dict, raw: np.ndarray) -> CondEmbedding:
    raw = np.asarray(raw)
    w1 = np.asarray(params["cond.w1"].data if isinstance(params["cond.w1"], ag.Tensor)
                    else params["cond.w1"])
    if raw.shape != (w1.shape[0],):
        raise ValueError(f"raw embedding has shape {raw.shape}, expected ({w1.shape[0]},)")
    P = {k: v if isinstance(v, ag.Tensor) else ag.Tensor(v) for k, v in params.items()}
    rows = project_rows(P, raw[None, :].astype(w1.dtype))
    return CondEmbedding(rows.data[0])
