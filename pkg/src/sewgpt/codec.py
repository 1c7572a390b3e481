"""Quantization of sewing patterns into token sequences and back.

Each panel becomes a fixed block of ``8K + 7`` value slots::

    4K edge coords | 4 rotation | 3 translation | 3K stitch tags | K stitch flags

Edge coordinates are standardized with dataset statistics, translations and
stitch tags are min-max normalized, and rotations are mapped by (q + 1) / 2.
Values are scaled by their class constant, rounded half away from zero,
shifted by ``C`` so they are non-negative and then by 3 to leave room for the
special tokens PAD=0, START=1, END=2.
"""
from __future__ import annotations

import enum
import json
import math
import warnings
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (DecodeWarning, EmptyDataset, MalformedSequence, PanelTooLarge,
                     SequenceTooLong, TokenOutOfRange)
from .pattern import Edge, Panel, Pattern, Placement, edge_midpoint_3d
from .stitches import StitchMatchConfig, assign_stitch_tags, recover_stitches

PAD, START, END = 0, 1, 2
N_SPECIAL = 3
EDGE_CLAMP = 4.0


class ParamClass(enum.IntEnum):
    EdgeCoord = 0
    Rotation = 1
    Translation = 2
    StitchTag = 3
    StitchFlag = 4
    Special = 5


@dataclass(frozen=True)
class QuantConfig:
    C_E: int = 50
    C_R: int = 1000
    C_T: int = 1000
    C_S: int = 1000
    C: int = 1000
    K: int = 14
    max_tokens: int = 1500

    def __post_init__(self):
        for name, value in asdict(self).items():
            if value <= 0:
                raise ValueError(f"{name} must be positive, got {value}")
        if self.C < round(EDGE_CLAMP * self.C_E):
            raise ValueError("C too small: clamped edge tokens would go negative")

    @property
    def panel_len(self) -> int:
        return 8 * self.K + 7

    @property
    def vocab_size(self) -> int:
        top = max(round(EDGE_CLAMP * self.C_E), self.C_R, self.C_T, self.C_S)
        return N_SPECIAL + self.C + top + 1

    @property
    def max_panels(self) -> int:
        return (self.max_tokens - 2) // self.panel_len


@dataclass(frozen=True)
class NormStats:
    edge_mean: tuple[float, float, float, float]
    edge_std: tuple[float, float, float, float]
    trans_min: tuple[float, float, float]
    trans_max: tuple[float, float, float]
    tag_min: tuple[float, float, float]
    tag_max: tuple[float, float, float]

    def trans_span(self) -> np.ndarray:
        return _span(self.trans_min, self.trans_max)

    def to_json(self) -> str:
        return json.dumps({k: list(v) for k, v in asdict(self).items()}, indent=1)

    @classmethod
    def from_dict(cls, data: dict) -> "NormStats":
        return cls(**{k: tuple(float(x) for x in data[k]) for k in cls.__dataclass_fields__})

    @classmethod
    def from_json(cls, text: str) -> "NormStats":
        return cls.from_dict(json.loads(text))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "NormStats":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def _span(lo, hi) -> np.ndarray:
    span = np.asarray(hi, dtype=float) - np.asarray(lo, dtype=float)
    return np.where(span > 0, span, 1.0)


@dataclass(frozen=True)
class TokenSeq:
    ids: tuple[int, ...]
    meta: tuple[tuple[int, ParamClass], ...]
    vocab_size: int

    def __len__(self) -> int:
        return len(self.ids)


def _t(values) -> tuple[float, ...]:
    return tuple(float(v) for v in values)


def fit_stats(patterns: Iterable[Pattern]) -> NormStats:
    edges, trans, mids = [], [], []
    for pattern in patterns:
        for panel in pattern.panels:
            if not panel.edges:
                raise ValueError("fit_stats needs panels with at least one edge")
            trans.append(panel.placement.translation)
            for j, e in enumerate(panel.edges):
                edges.append((*e.start, *e.control))
                mids.append(edge_midpoint_3d(panel, j))
    if not edges:
        raise EmptyDataset("cannot fit statistics on an empty collection")
    edges_a = np.array(edges, dtype=float)
    std = edges_a.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    trans_a = np.array(trans, dtype=float)
    mids_a = np.array(mids, dtype=float)
    return NormStats(_t(edges_a.mean(axis=0)), _t(std),
                     _t(trans_a.min(axis=0)), _t(trans_a.max(axis=0)),
                     _t(mids_a.min(axis=0)), _t(mids_a.max(axis=0)))


def quantize_value(x: float, scale: int, bound: float = EDGE_CLAMP) -> int:
    """round(scale * x) half away from zero, clamped to +-round(bound * scale)."""
    if not math.isfinite(x):
        raise ValueError(f"cannot quantize non-finite value {x}")
    y = scale * x
    q = int(math.floor(abs(y) + 0.5))
    q = q if y >= 0 else -q
    limit = int(round(bound * scale))
    return max(-limit, min(limit, q))


def param_class_of(slot_in_panel: int, K: int) -> ParamClass:
    if not 0 <= slot_in_panel < 8 * K + 7:
        raise IndexError(f"slot {slot_in_panel} outside a {8 * K + 7}-slot panel")
    if slot_in_panel < 4 * K:
        return ParamClass.EdgeCoord
    if slot_in_panel < 4 * K + 4:
        return ParamClass.Rotation
    if slot_in_panel < 4 * K + 7:
        return ParamClass.Translation
    if slot_in_panel < 7 * K + 7:
        return ParamClass.StitchTag
    return ParamClass.StitchFlag


def positional_meta(ids: Sequence[int], K: int) -> tuple[tuple[int, ParamClass], ...]:
    """Per-token (panel index, class) from position alone; panels count from 1."""
    block = 8 * K + 7
    meta = []
    for pos, tok in enumerate(ids):
        if tok < N_SPECIAL:
            meta.append((0, ParamClass.Special))
        else:
            k = pos - 1
            meta.append((k // block + 1, param_class_of(k % block, K)))
    return tuple(meta)


def slot_of(pos: int, token: int, K: int) -> int:
    return 0 if token < N_SPECIAL or pos == 0 else (pos - 1) % (8 * K + 7)


def make_token_seq(ids: Sequence[int], cfg: QuantConfig) -> TokenSeq:
    ids = tuple(int(i) for i in ids)
    return TokenSeq(ids, positional_meta(ids, cfg.K), cfg.vocab_size)


def _panel_raw(panel: Panel, stats: NormStats, cfg: QuantConfig) -> list[int]:
    K = cfg.K
    n = len(panel.edges)
    mean = np.asarray(stats.edge_mean)
    std = np.asarray(stats.edge_std)
    raw = []
    for j in range(K):
        if j < n:
            e = panel.edges[j]
            z = (np.array([*e.start, *e.control]) - mean) / std
            raw.extend(quantize_value(float(v), cfg.C_E) for v in np.clip(z, -EDGE_CLAMP, EDGE_CLAMP))
        else:
            raw.extend((0, 0, 0, 0))
    for c in panel.placement.rotation:
        raw.append(quantize_value(min(max((c + 1.0) / 2.0, 0.0), 1.0), cfg.C_R, 1.0))
    t = (np.asarray(panel.placement.translation) - stats.trans_min) / stats.trans_span()
    raw.extend(quantize_value(float(v), cfg.C_T, 1.0) for v in np.clip(t, 0.0, 1.0))
    for j in range(K):
        if j < n:
            raw.extend(quantize_value(min(max(v, 0.0), 1.0), cfg.C_S, 1.0)
                       for v in panel.stitch_tags[j])
        else:
            raw.extend((0, 0, 0))
    raw.extend(int(panel.stitch_flags[j]) if j < n else 0 for j in range(K))
    return raw


def encode(pattern: Pattern, stats: NormStats, cfg: QuantConfig = QuantConfig()) -> TokenSeq:
    """Tokenize a pattern.

    Stitch tags are recomputed from the stitch list in the frame given by
    ``stats`` so that encoding does not depend on how the input was tagged.
    """
    for i, panel in enumerate(pattern.panels):
        if len(panel.edges) > cfg.K:
            raise PanelTooLarge(f"panel {i} has {len(panel.edges)} edges, K={cfg.K}")
    length = 2 + cfg.panel_len * len(pattern.panels)
    if length > cfg.max_tokens:
        raise SequenceTooLong(f"{len(pattern.panels)} panels need {length} tokens, "
                              f"limit is {cfg.max_tokens}")
    tagged = assign_stitch_tags(pattern, stats)
    offset = cfg.C + N_SPECIAL
    ids = [START]
    for panel in tagged.panels:
        ids.extend(r + offset for r in _panel_raw(panel, stats, cfg))
    ids.append(END)
    return make_token_seq(ids, cfg)


def decode(tokens: TokenSeq | Sequence[int], stats: NormStats, cfg: QuantConfig = QuantConfig(),
           stitch_cfg: StitchMatchConfig = StitchMatchConfig(), caption: str | None = None) -> Pattern:
    """Invert :func:`encode`.

    Panels with fewer than three real edges are dropped with a
    :class:`DecodeWarning`; flagged edges that find no partner are unflagged.
    """
    ids = list(tokens.ids if isinstance(tokens, TokenSeq) else tokens)
    vocab = cfg.vocab_size
    for k, t in enumerate(ids):
        if not 0 <= t < vocab:
            raise TokenOutOfRange(f"token {t} at position {k} outside vocabulary of {vocab}")
    if not ids or ids[0] != START:
        raise MalformedSequence("sequence must begin with START")
    interior = ids[1:-1] if ids[-1] == END else ids[1:]
    block = cfg.panel_len
    if not interior or len(interior) % block:
        raise MalformedSequence(f"interior length {len(interior)} is not a positive multiple "
                                f"of {block}")
    if any(t < N_SPECIAL for t in interior):
        raise MalformedSequence("special token inside the value stream")

    K = cfg.K
    mean = np.asarray(stats.edge_mean)
    std = np.asarray(stats.edge_std)
    raw_all = np.asarray(interior, dtype=np.int64) - (cfg.C + N_SPECIAL)
    panels = []
    for p in range(len(interior) // block):
        raw = raw_all[p * block:(p + 1) * block]
        edge_raw = raw[:4 * K].reshape(K, 4)
        rot_raw = raw[4 * K:4 * K + 4]
        trans_raw = raw[4 * K + 4:4 * K + 7]
        tag_raw = raw[4 * K + 7:7 * K + 7].reshape(K, 3)
        flag_raw = raw[7 * K + 7:]
        n = K
        while n > 0 and not (edge_raw[n - 1].any() or tag_raw[n - 1].any() or flag_raw[n - 1]):
            n -= 1
        if n < 3:
            warnings.warn(f"panel {p} decodes to {n} edges; dropped", DecodeWarning, stacklevel=2)
            continue
        coords = edge_raw[:n] / cfg.C_E * std + mean
        edges = tuple(Edge((float(c[0]), float(c[1])), (float(c[2]), float(c[3]))) for c in coords)
        q = rot_raw / cfg.C_R * 2.0 - 1.0
        norm = np.linalg.norm(q)
        q = q / norm if norm > 0 else np.array([1.0, 0.0, 0.0, 0.0])
        t = trans_raw / cfg.C_T * stats.trans_span() + np.asarray(stats.trans_min)
        flags = tuple(int(f >= 1) for f in flag_raw[:n])
        tags = tuple(_t(tag_raw[j] / cfg.C_S) if flags[j] else (0.0, 0.0, 0.0) for j in range(n))
        panels.append(Panel(edges, Placement(_t(q), _t(t)), tags, flags))

    partial = Pattern(tuple(panels), (), caption)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        stitches = recover_stitches(partial, stitch_cfg)
    for w in caught:
        warnings.warn(str(w.message), DecodeWarning, stacklevel=2)
    matched = {end for s in stitches for end in (s.a, s.b)}
    fixed = []
    for i, panel in enumerate(panels):
        flags = tuple(f if (i, j) in matched else 0 for j, f in enumerate(panel.stitch_flags))
        tags = tuple(t if flags[j] else (0.0, 0.0, 0.0) for j, t in enumerate(panel.stitch_tags))
        fixed.append(replace(panel, stitch_tags=tags, stitch_flags=flags))
    return Pattern(tuple(fixed), tuple(stitches), caption)


# -- token files --------------------------------------------------------------

def write_token_file(path: str | Path, seqs: Iterable[TokenSeq], cfg: QuantConfig) -> None:
    lines = [f"#vocab={cfg.vocab_size} K={cfg.K}"]
    lines.extend(" ".join(str(t) for t in s.ids) for s in seqs)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_token_file(path: str | Path, cfg: QuantConfig) -> list[TokenSeq]:
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            fields = dict(f.split("=", 1) for f in line[1:].split() if "=" in f)
            if "K" in fields and int(fields["K"]) != cfg.K:
                raise MalformedSequence(f"token file uses K={fields['K']}, expected {cfg.K}")
            if "vocab" in fields and int(fields["vocab"]) != cfg.vocab_size:
                raise MalformedSequence(f"token file vocab {fields['vocab']} != {cfg.vocab_size}")
            continue
        try:
            ids = [int(t) for t in line.split()]
        except ValueError as exc:
            raise MalformedSequence(f"bad token line: {line[:40]!r}") from exc
        out.append(make_token_seq(ids, cfg))
    return out


# -- round-trip diagnostics ---------------------------------------------------

@dataclass(frozen=True)
class RoundTrip:
    """Largest reconstruction error per channel, in the units the codec quantizes."""
    edge: float
    rotation: float
    translation: float
    tag: float
    counts_equal: bool
    flags_equal: bool
    stitches_equal: bool

    def bounds(self, cfg: QuantConfig) -> dict[str, float]:
        return {"edge": 0.5 / cfg.C_E, "rotation": 0.5 / cfg.C_R,
                "translation": 0.5 / cfg.C_T, "tag": 0.5 / cfg.C_S}

    def within(self, cfg: QuantConfig, slack: float = 1e-9) -> bool:
        errs = {"edge": self.edge, "rotation": self.rotation,
                "translation": self.translation, "tag": self.tag}
        return (all(errs[k] <= b + slack for k, b in self.bounds(cfg).items())
                and self.counts_equal and self.flags_equal and self.stitches_equal)


def compare_patterns(original: Pattern, decoded: Pattern, stats: NormStats,
                     cfg: QuantConfig = QuantConfig()) -> RoundTrip:
    ref = assign_stitch_tags(original, stats)
    counts = [len(p.edges) for p in ref.panels] == [len(p.edges) for p in decoded.panels]
    if not counts:
        return RoundTrip(math.inf, math.inf, math.inf, math.inf, False, False, False)
    std = np.asarray(stats.edge_std)
    span = stats.trans_span()
    edge = rot = trans = tag = 0.0
    flags = True
    for a, b in zip(ref.panels, decoded.panels):
        ea = np.array([(*e.start, *e.control) for e in a.edges])
        eb = np.array([(*e.start, *e.control) for e in b.edges])
        edge = max(edge, float(np.abs((ea - eb) / std).max()))
        qa = np.asarray(a.placement.rotation)
        qb = np.asarray(b.placement.rotation)
        rot = max(rot, float(np.abs(qa - qb).max()) / 2.0)
        ta = np.asarray(a.placement.translation)
        tb = np.asarray(b.placement.translation)
        trans = max(trans, float(np.abs((ta - tb) / span).max()))
        tag = max(tag, float(np.abs(np.asarray(a.stitch_tags) - np.asarray(b.stitch_tags)).max()))
        flags = flags and a.stitch_flags == b.stitch_flags
    return RoundTrip(edge, rot, trans, tag, counts, flags,
                     ref.stitch_set() == decoded.stitch_set())
