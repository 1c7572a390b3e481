"""Decoder-only transformer over pattern tokens with caption cross-attention.

Each input token is embedded as the sum of a value embedding, a parameter
class embedding, a panel-index embedding and (optionally) a within-panel slot
embedding. Blocks are pre-layernorm: causal self-attention, cross-attention
over the conditioning row(s), then a GELU MLP, each with a residual.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from typing import Sequence

import numpy as np

from . import autograd as ag
from .codec import PAD, ParamClass, TokenSeq, slot_of
from .conditioning import CondEmbedding, project_rows
from .errors import ConfigError, TokenOutOfRange

N_CLASSES = len(ParamClass)


@dataclass(frozen=True)
class ModelConfig:
    n_layers: int = 2
    d_model: int = 64
    n_heads: int = 4
    vocab_size: int = 2004
    K: int = 14
    max_panels: int = 12
    max_seq_len: int = 0
    d_cond_in: int = 1024
    slot_embedding: bool = True

    def __post_init__(self):
        if self.max_seq_len == 0:
            object.__setattr__(self, "max_seq_len", self.full_len)
        if self.d_model % self.n_heads:
            raise ConfigError("d_model must be divisible by n_heads")
        if self.max_seq_len < self.full_len:
            raise ConfigError(f"max_seq_len {self.max_seq_len} < {self.full_len} needed for "
                              f"{self.max_panels} panels")
        if min(self.n_layers, self.d_model, self.vocab_size, self.K, self.max_panels,
               self.d_cond_in) <= 0:
            raise ConfigError("model dimensions must be positive")

    @property
    def panel_len(self) -> int:
        return 8 * self.K + 7

    @property
    def full_len(self) -> int:
        return 2 + self.panel_len * self.max_panels

    # the separate embedding widths all equal d_model
    d_pos = d_param = d_val = d_feature = property(lambda self: self.d_model)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in names})


def param_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    D, V = cfg.d_model, cfg.vocab_size
    shapes = {
        "tok_emb": (V, D),
        "cls_emb": (N_CLASSES, D),
        "panel_emb": (cfg.max_panels + 1, D),
    }
    if cfg.slot_embedding:
        shapes["slot_emb"] = (cfg.panel_len, D)
    shapes.update({"cond.w1": (cfg.d_cond_in, D), "cond.b1": (D,),
                   "cond.w2": (D, D), "cond.b2": (D,), "cond_null": (D,)})
    for i in range(cfg.n_layers):
        p = f"h{i}."
        for ln in ("ln1", "ln2", "ln3"):
            shapes[p + ln + ".g"] = (D,)
            shapes[p + ln + ".b"] = (D,)
        for att in ("attn", "xattn"):
            for w in "qkvo":
                shapes[f"{p}{att}.w{w}"] = (D, D)
                shapes[f"{p}{att}.b{w}"] = (D,)
        shapes[p + "mlp.w1"] = (D, 4 * D)
        shapes[p + "mlp.b1"] = (4 * D,)
        shapes[p + "mlp.w2"] = (4 * D, D)
        shapes[p + "mlp.b2"] = (D,)
    shapes.update({"ln_f.g": (D,), "ln_f.b": (D,), "head.w": (D, V), "head.b": (V,)})
    return shapes


def init_params(cfg: ModelConfig, seed: int = 0, scale: float = 0.02,
                dtype=np.float32) -> dict[str, np.ndarray]:
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in param_shapes(cfg).items():
        leaf = name.rsplit(".", 1)[-1]
        if leaf == "g":
            params[name] = np.ones(shape, dtype=dtype)
        elif leaf.startswith("b") and len(shape) == 1:
            params[name] = np.zeros(shape, dtype=dtype)
        else:
            params[name] = (rng.standard_normal(shape) * scale).astype(dtype)
    return params


def check_params(params: dict, cfg: ModelConfig) -> None:
    want = param_shapes(cfg)
    if set(params) != set(want):
        raise ConfigError(f"parameter names differ from config: "
                          f"{sorted(set(params) ^ set(want))[:5]}")
    for name, shape in want.items():
        if tuple(np.shape(params[name])) != shape:
            raise ConfigError(f"{name} has shape {np.shape(params[name])}, config needs {shape}")


@dataclass
class Batch:
    """Right-padded token arrays plus per-row conditioning."""
    ids: np.ndarray
    cls: np.ndarray
    panel: np.ndarray
    slot: np.ndarray
    lengths: np.ndarray
    cond_raw: np.ndarray
    null: np.ndarray


def make_batch(seqs: Sequence[TokenSeq], K: int, cond_raw: np.ndarray,
               null: np.ndarray | None = None) -> Batch:
    B = len(seqs)
    T = max(len(s) for s in seqs)
    ids = np.full((B, T), PAD, dtype=np.int64)
    cls = np.full((B, T), int(ParamClass.Special), dtype=np.int64)
    panel = np.zeros((B, T), dtype=np.int64)
    slot = np.zeros((B, T), dtype=np.int64)
    for b, s in enumerate(seqs):
        n = len(s)
        ids[b, :n] = s.ids
        panel[b, :n] = [m[0] for m in s.meta]
        cls[b, :n] = [int(m[1]) for m in s.meta]
        slot[b, :n] = [slot_of(p, t, K) for p, t in enumerate(s.ids)]
    null = np.zeros(B, dtype=bool) if null is None else np.asarray(null, dtype=bool)
    return Batch(ids, cls, panel, slot, np.array([len(s) for s in seqs]),
                 np.asarray(cond_raw).reshape(B, -1), null)


def as_tensors(params: dict, requires_grad: bool = False) -> dict[str, ag.Tensor]:
    return {k: v if isinstance(v, ag.Tensor) else ag.Tensor(v, requires_grad)
            for k, v in params.items()}


def embed(P: dict, cfg: ModelConfig, ids, cls, panel, slot) -> ag.Tensor:
    if ids.size and (ids.max() >= cfg.vocab_size or ids.min() < 0):
        raise TokenOutOfRange(f"token id outside vocabulary of {cfg.vocab_size}")
    if panel.size and panel.max() > cfg.max_panels:
        raise ConfigError(f"panel index {panel.max()} exceeds max_panels={cfg.max_panels}")
    x = ag.add(ag.embedding(P["tok_emb"], ids), ag.embedding(P["cls_emb"], cls))
    x = ag.add(x, ag.embedding(P["panel_emb"], panel))
    if cfg.slot_embedding:
        x = ag.add(x, ag.embedding(P["slot_emb"], slot))
    return x


def _heads(x: ag.Tensor, H: int) -> ag.Tensor:
    B, T, D = x.shape
    return ag.transpose(ag.reshape(x, (B, T, H, D // H)), (0, 2, 1, 3))


def _attention(P, pre, h, kv_src, H, mask):
    q = _heads(ag.linear(h, P[pre + "wq"], P[pre + "bq"]), H)
    k = _heads(ag.linear(kv_src, P[pre + "wk"], P[pre + "bk"]), H)
    v = _heads(ag.linear(kv_src, P[pre + "wv"], P[pre + "bv"]), H)
    dh = q.shape[-1]
    scores = ag.mul(ag.matmul(q, ag.transpose(k, (0, 1, 3, 2))), np.asarray(dh ** -0.5, q.data.dtype))
    att = ag.softmax(scores, mask)
    out = ag.matmul(att, v)
    B, _, T, _ = out.shape
    out = ag.reshape(ag.transpose(out, (0, 2, 1, 3)), (B, T, H * dh))
    return ag.linear(out, P[pre + "wo"], P[pre + "bo"])


def condition(P: dict, cond_raw: np.ndarray, null: np.ndarray) -> ag.Tensor:
    """Projected caption rows [B, 1, D], with the learned null row where ``null``."""
    dtype = P["cond.w1"].data.dtype
    rows = project_rows(P, np.asarray(cond_raw, dtype=dtype))
    if not null.any():
        return rows
    m = null.astype(dtype)[:, None, None]
    return ag.add(ag.mul(rows, 1.0 - m), ag.mul(ag.reshape(P["cond_null"], (1, 1, -1)), m))


def transformer(P: dict, cfg: ModelConfig, x: ag.Tensor, cond_rows: ag.Tensor,
                last_only: bool = False) -> ag.Tensor:
    T = x.shape[1]
    causal = np.tril(np.ones((T, T), dtype=bool))
    for i in range(cfg.n_layers):
        p = f"h{i}."
        h = ag.layer_norm(x, P[p + "ln1.g"], P[p + "ln1.b"])
        x = ag.add(x, _attention(P, p + "attn.", h, h, cfg.n_heads, causal))
        h = ag.layer_norm(x, P[p + "ln2.g"], P[p + "ln2.b"])
        x = ag.add(x, _attention(P, p + "xattn.", h, cond_rows, cfg.n_heads, None))
        h = ag.layer_norm(x, P[p + "ln3.g"], P[p + "ln3.b"])
        h = ag.gelu(ag.linear(h, P[p + "mlp.w1"], P[p + "mlp.b1"]))
        x = ag.add(x, ag.linear(h, P[p + "mlp.w2"], P[p + "mlp.b2"]))
    if last_only:
        x = ag.Tensor(x.data[:, -1:])
    x = ag.layer_norm(x, P["ln_f.g"], P["ln_f.b"])
    return ag.linear(x, P["head.w"], P["head.b"])


def batch_logits(P: dict, cfg: ModelConfig, batch: Batch, cond_rows: ag.Tensor | None = None,
                 last_only: bool = False):
    if batch.ids.shape[1] > cfg.max_seq_len:
        raise ConfigError(f"sequence length {batch.ids.shape[1]} > max_seq_len {cfg.max_seq_len}")
    if cond_rows is None:
        cond_rows = condition(P, batch.cond_raw, batch.null)
    x = embed(P, cfg, batch.ids, batch.cls, batch.panel, batch.slot)
    return transformer(P, cfg, x, cond_rows, last_only)


def batch_loss(P: dict, cfg: ModelConfig, batch: Batch) -> ag.Tensor:
    """Teacher-forced next-token loss; padding after each sequence's end is masked."""
    inputs = Batch(batch.ids[:, :-1], batch.cls[:, :-1], batch.panel[:, :-1], batch.slot[:, :-1],
                   batch.lengths - 1, batch.cond_raw, batch.null)
    logits = batch_logits(P, cfg, inputs)
    targets = batch.ids[:, 1:]
    T = targets.shape[1]
    weights = np.arange(T)[None, :] < (batch.lengths - 1)[:, None]
    return ag.cross_entropy(logits, targets, weights)


# -- single-sequence convenience API ----------------------------------------

def _single(tokens: TokenSeq, cfg: ModelConfig, cond_raw=None) -> Batch:
    raw = np.zeros((1, cfg.d_cond_in)) if cond_raw is None else np.asarray(cond_raw)[None]
    return make_batch([tokens], cfg.K, raw)


def embed_tokens(params: dict, cfg: ModelConfig, tokens: TokenSeq) -> np.ndarray:
    b = _single(tokens, cfg)
    if len(tokens) > cfg.max_seq_len:
        raise ConfigError("sequence longer than max_seq_len")
    return embed(as_tensors(params), cfg, b.ids, b.cls, b.panel, b.slot).data[0]


def _data(x) -> np.ndarray:
    return x.data if isinstance(x, ag.Tensor) else np.asarray(x)


def cond_rows(params: dict, cond: CondEmbedding | np.ndarray | None) -> ag.Tensor:
    """Conditioning rows [1, n, D]; ``None`` selects the learned null row."""
    dtype = _data(params["tok_emb"]).dtype
    if cond is None:
        vec = _data(params["cond_null"]).reshape(1, -1)
    else:
        vec = cond.vectors if isinstance(cond, CondEmbedding) else np.atleast_2d(cond)
    return ag.Tensor(np.asarray(vec, dtype=dtype)[None])


def forward(params: dict, cfg: ModelConfig, tokens: TokenSeq,
            cond: CondEmbedding | None) -> np.ndarray:
    """Logits [len, vocab] for one sequence; ``cond=None`` uses the learned null row."""
    P = as_tensors(params)
    b = _single(tokens, cfg)
    rows = cond_rows(params, cond)
    if rows.shape[-1] != cfg.d_model:
        raise ConfigError(f"conditioning width {rows.shape[-1]} != d_model {cfg.d_model}")
    return batch_logits(P, cfg, b, rows).data[0]


def nll_loss(logits: np.ndarray, targets: Sequence[int], mask: Sequence[bool] | None = None) -> float:
    """Mean negative log-likelihood of ``targets`` under row-wise softmax(logits)."""
    logits = np.asarray(logits, dtype=np.float64)
    targets = np.asarray(targets)
    if logits.shape[0] != targets.shape[0]:
        raise ValueError(f"{logits.shape[0]} logit rows for {targets.shape[0]} targets")
    w = np.ones(len(targets)) if mask is None else np.asarray(mask, dtype=float)
    return float(ag.cross_entropy(ag.Tensor(logits), targets, w).data)


def config_json(cfg: ModelConfig, extra: dict | None = None) -> str:
    payload = {"model": cfg.to_dict()}
    if extra:
        payload.update(extra)
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))
