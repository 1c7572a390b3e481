"""Autoregressive decoding with temperature and top-k, plus prefix completion."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .codec import END, PAD, START, TokenSeq, positional_meta
from .conditioning import CondEmbedding
from .errors import ConfigError
from .model import ModelConfig, as_tensors, batch_logits, cond_rows, make_batch


@dataclass(frozen=True)
class SamplerOptions:
    temperature: float = 0.0
    top_k: int | None = None
    seed: int = 0
    max_new_tokens: int = 1500

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.top_k is not None and self.top_k < 1:
            raise ValueError("top_k must be >= 1")


@dataclass(frozen=True)
class SampleResult:
    tokens: TokenSeq
    ended: bool
    truncated: bool


def choose_token(logits: np.ndarray, opts: SamplerOptions, rng: np.random.Generator) -> int:
    """Pick the next id from one logit row: temperature, then top-k, then a draw."""
    z = np.asarray(logits, dtype=np.float64).copy()
    z[[PAD, START]] = -np.inf
    if opts.temperature == 0:
        return int(np.argmax(z))
    z = z / opts.temperature
    if opts.top_k is not None and opts.top_k < len(z):
        kth = np.partition(z, -opts.top_k)[-opts.top_k]
        z[z < kth] = -np.inf
    z -= z.max()
    p = np.exp(z)
    p /= p.sum()
    return int(rng.choice(len(p), p=p))


def _step_logits(P, cfg: ModelConfig, ids: list[int], rows) -> np.ndarray:
    seq = TokenSeq(tuple(ids), positional_meta(ids, cfg.K), cfg.vocab_size)
    batch = make_batch([seq], cfg.K, np.zeros((1, cfg.d_cond_in)))
    return batch_logits(P, cfg, batch, rows, last_only=True).data[0, -1]


def sample(params: dict, cfg: ModelConfig, cond: CondEmbedding | None,
           opts: SamplerOptions = SamplerOptions(), prefix: TokenSeq | None = None) -> SampleResult:
    """Extend ``prefix`` (default ``[START]``) until END or the token budget.

    If END arrives mid-panel, or no END arrives at all, the output is cut back
    to the last whole panel, END is appended and ``truncated`` is set.
    """
    ids = [START] if prefix is None else list(prefix.ids)
    if not ids or ids[0] != START or END in ids[1:]:
        raise ValueError("prefix must start with START and contain no END")
    limit = min(cfg.max_seq_len, cfg.full_len)
    if len(ids) > limit:
        raise ConfigError(f"prefix of {len(ids)} tokens exceeds max_seq_len {limit}")
    P = as_tensors(params)
    rows = cond_rows(params, cond)
    rng = np.random.default_rng(opts.seed)
    ended = False
    for _ in range(opts.max_new_tokens):
        if len(ids) >= limit:
            break
        tok = choose_token(_step_logits(P, cfg, ids, rows), opts, rng)
        ids.append(tok)
        if tok == END:
            ended = True
            break
    body = ids[1:-1] if ended else ids[1:]
    block = cfg.panel_len
    keep = len(body) - len(body) % block
    truncated = (not ended) or keep != len(body)
    out = [START] + body[:keep] + [END]
    return SampleResult(TokenSeq(tuple(out), positional_meta(out, cfg.K), cfg.vocab_size),
                        ended, truncated)
