"""Central finite-difference check of the analytic gradients (float64)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .codec import END, START, TokenSeq, positional_meta
from .model import ModelConfig, as_tensors, batch_loss, init_params, make_batch
from .train import loss_and_grads

TINY = ModelConfig(n_layers=1, d_model=16, n_heads=2, vocab_size=64, K=2, max_panels=2,
                   d_cond_in=8)


@dataclass(frozen=True)
class GradCheckResult:
    names: list[str]
    analytic: np.ndarray
    numeric: np.ndarray
    rel_error: np.ndarray

    @property
    def max_rel_error(self) -> float:
        return float(self.rel_error.max())


def relative_error(a: np.ndarray, n: np.ndarray, floor: float = 1e-10) -> np.ndarray:
    """|a - n| / max(|a|, |n|); pairs where both are below ``floor`` count as exact."""
    scale = np.maximum(np.abs(a), np.abs(n))
    return np.where(scale < floor, 0.0, np.abs(a - n) / np.maximum(scale, floor))


def random_batch(cfg: ModelConfig, rng: np.random.Generator, n_seqs: int = 2):
    seqs = []
    for b in range(n_seqs):
        panels = 1 + b % cfg.max_panels
        body = rng.integers(3, cfg.vocab_size, size=panels * cfg.panel_len).tolist()
        ids = [START] + body + [END]
        seqs.append(TokenSeq(tuple(ids), positional_meta(ids, cfg.K), cfg.vocab_size))
    raw = rng.standard_normal((n_seqs, cfg.d_cond_in))
    null = np.zeros(n_seqs, dtype=bool)
    null[-1] = True
    return make_batch(seqs, cfg.K, raw, null)


def gradcheck(cfg: ModelConfig = TINY, n_coords: int = 100, h: float = 1e-3, seed: int = 0,
              init_scale: float = 0.02) -> GradCheckResult:
    """Compare backprop with central differences on ``n_coords`` random coordinates.

    Coordinates are drawn round-robin over the parameter tensors so every
    tensor is exercised.
    """
    rng = np.random.default_rng(seed)
    params = init_params(cfg, seed, scale=init_scale, dtype=np.float64)
    # perturb gains/biases away from their trivial init so their gradients are generic
    for name, p in params.items():
        if p.ndim == 1:
            p += rng.standard_normal(p.shape) * 0.1
    batch = random_batch(cfg, rng)
    _, grads = loss_and_grads(params, cfg, batch)

    def loss_at() -> float:
        return float(batch_loss(as_tensors(params), cfg, batch).data)

    names = list(params)
    picked, analytic, numeric = [], [], []
    for k in range(n_coords):
        name = names[k % len(names)]
        p = params[name]
        idx = tuple(int(rng.integers(0, s)) for s in p.shape)
        old = p[idx]
        p[idx] = old + h
        up = loss_at()
        p[idx] = old - h
        down = loss_at()
        p[idx] = old
        g = grads[name]
        analytic.append(0.0 if g is None else float(g[idx]))
        numeric.append((up - down) / (2 * h))
        picked.append(f"{name}{list(idx)}")
    a, n = np.array(analytic), np.array(numeric)
    return GradCheckResult(picked, a, n, relative_error(a, n))
