"""Training loop: teacher-forced next-token loss, reverse-mode gradients, Adam."""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, fields
from typing import Callable, Sequence

import numpy as np

from .autograd import log_softmax_np
from .codec import PAD, START, TokenSeq
from .errors import TrainingDiverged
from .model import Batch, ModelConfig, as_tensors, batch_logits, batch_loss, make_batch
from .optim import Adam

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-4
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    batch_size: int = 4
    steps: int = 1000
    seed: int = 0
    deterministic: bool = True
    null_cond_prob: float = 0.1

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        names = {f.name for f in fields(cls)}
        kw = {k: v for k, v in data.items() if k in names}
        if "betas" in kw:
            kw["betas"] = tuple(kw["betas"])
        return cls(**kw)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["betas"] = list(self.betas)
        return d


def loss_and_grads(params: dict[str, np.ndarray], cfg: ModelConfig,
                   batch: Batch) -> tuple[float, dict[str, np.ndarray]]:
    P = as_tensors(params, requires_grad=True)
    loss = batch_loss(P, cfg, batch)
    value = float(loss.data)
    if not math.isfinite(value):
        raise TrainingDiverged(f"loss became {value}")
    loss.backward()
    return value, {k: t.grad for k, t in P.items()}


def backward_and_step(params: dict[str, np.ndarray], cfg: ModelConfig, batch: Batch,
                      opt: Adam) -> tuple[dict[str, np.ndarray], float]:
    value, grads = loss_and_grads(params, cfg, batch)
    opt.step(params, grads)
    return params, value


def batch_schedule(n_items: int, batch_size: int, steps: int, rng: np.random.Generator):
    """Yield index arrays: a fresh permutation per epoch, cut into batches."""
    done = 0
    while done < steps:
        order = rng.permutation(n_items)
        for start in range(0, n_items, batch_size):
            if done >= steps:
                return
            yield order[start:start + batch_size]
            done += 1


def train(params: dict[str, np.ndarray], cfg: ModelConfig, tcfg: TrainConfig,
          data: Sequence[tuple[TokenSeq, np.ndarray]],
          callback: Callable[[int, float], bool | None] | None = None) -> list[float]:
    """Train in place; returns per-step losses.

    ``callback(step, loss)`` may return True to stop early.
    """
    if not data:
        raise ValueError("no training data")
    rng = np.random.default_rng(tcfg.seed)
    opt = Adam(tcfg.lr, tcfg.betas, tcfg.eps)
    history = []
    for step, idx in enumerate(batch_schedule(len(data), tcfg.batch_size, tcfg.steps, rng), 1):
        seqs = [data[i][0] for i in idx]
        raw = np.stack([data[i][1] for i in idx])
        null = rng.random(len(idx)) < tcfg.null_cond_prob
        batch = make_batch(seqs, cfg.K, raw, null)
        _, value = backward_and_step(params, cfg, batch, opt)
        history.append(value)
        if step % 100 == 0:
            log.info("step %d loss %.4f", step, value)
        if callback is not None and callback(step, value):
            break
    return history


def evaluate(params: dict[str, np.ndarray], cfg: ModelConfig,
             data: Sequence[tuple[TokenSeq, np.ndarray]],
             batch_size: int = 4) -> tuple[float, float]:
    """Teacher-forced (mean loss, argmax accuracy) over ``data`` with captions.

    Accuracy counts positions where the most likely next token, with START and
    PAD excluded as the sampler does, equals the target. At 1.0 greedy decoding
    reproduces every sequence.
    """
    total, hits, count = 0.0, 0, 0
    P = as_tensors(params)
    for start in range(0, len(data), batch_size):
        chunk = data[start:start + batch_size]
        batch = make_batch([c[0] for c in chunk], cfg.K, np.stack([c[1] for c in chunk]))
        inputs = Batch(batch.ids[:, :-1], batch.cls[:, :-1], batch.panel[:, :-1],
                       batch.slot[:, :-1], batch.lengths - 1, batch.cond_raw, batch.null)
        logits = batch_logits(P, cfg, inputs).data.astype(np.float64)
        targets = batch.ids[:, 1:]
        valid = np.arange(targets.shape[1])[None, :] < (batch.lengths - 1)[:, None]
        logp = log_softmax_np(logits)
        picked = np.take_along_axis(logp, targets[..., None], axis=-1)[..., 0]
        total -= float(picked[valid].sum())
        logits[..., [PAD, START]] = -np.inf
        hits += int((logits.argmax(-1) == targets)[valid].sum())
        count += int(valid.sum())
    return total / count, hits / count


def mean_loss(params: dict[str, np.ndarray], cfg: ModelConfig,
              data: Sequence[tuple[TokenSeq, np.ndarray]], batch_size: int = 4) -> float:
    """Token-weighted mean loss over ``data`` with captions (no null rows)."""
    return evaluate(params, cfg, data, batch_size)[0]
