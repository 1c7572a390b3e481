"""Per-edge stitch tags/flags and stitch recovery by tag matching."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from .errors import InvalidStitchGraph
from .pattern import Panel, Pattern, Stitch, edge_midpoint_3d

# World box (cm) of the T-pose layout used by the synthetic templates; used to
# normalize tags when no dataset statistics are available.
DEFAULT_TAG_FRAME = (np.array([-120.0, -20.0, -40.0]), np.array([120.0, 180.0, 40.0]))


@dataclass(frozen=True)
class StitchMatchConfig:
    tau: float = 0.05

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be positive")


class StitchWarning(UserWarning):
    pass


def _frame_arrays(frame):
    if frame is None:
        frame = DEFAULT_TAG_FRAME
    if hasattr(frame, "tag_min"):
        frame = (frame.tag_min, frame.tag_max)
    lo = np.asarray(frame[0], dtype=float)
    span = np.asarray(frame[1], dtype=float) - lo
    span = np.where(span > 0, span, 1.0)
    return lo, span


def assign_stitch_tags(pattern: Pattern, frame=None) -> Pattern:
    """Populate tags and flags from ``pattern.stitches``.

    Both edges of a stitch get the mean of their 3D midpoints, mapped into
    [0, 1]^3 by ``frame`` (a ``(lo, hi)`` pair or anything with ``tag_min`` /
    ``tag_max``; defaults to :data:`DEFAULT_TAG_FRAME`).
    """
    lo, span = _frame_arrays(frame)
    owner: dict[tuple[int, int], tuple[int, int]] = {}
    for s in pattern.stitches:
        for end, other in ((s.a, s.b), (s.b, s.a)):
            if end in owner or s.a == s.b:
                raise InvalidStitchGraph(f"edge {end} appears in more than one stitch")
            owner[end] = other

    panels = []
    for i, panel in enumerate(pattern.panels):
        tags, flags = [], []
        for j in range(len(panel.edges)):
            partner = owner.get((i, j))
            if partner is None:
                tags.append((0.0, 0.0, 0.0))
                flags.append(0)
                continue
            pi, pj = partner
            try:
                m1 = np.array(edge_midpoint_3d(panel, j))
                m2 = np.array(edge_midpoint_3d(pattern.panels[pi], pj))
            except IndexError as exc:
                raise InvalidStitchGraph(f"stitch references missing edge {partner}") from exc
            tag = ((m1 + m2) / 2.0 - lo) / span
            tags.append(tuple(float(v) for v in tag))
            flags.append(1)
        panels.append(replace(panel, stitch_tags=tuple(tags), stitch_flags=tuple(flags)))
    return replace(pattern, panels=tuple(panels))


def match_tags(tags: np.ndarray, tau: float) -> tuple[list[tuple[int, int]], list[int]]:
    """Greedy global-closest pairing of tag rows.

    Repeatedly takes the closest still-unmatched pair whose distance is at
    most ``tau``; ties go to the lexicographically smallest index pair.
    Returns the pairs and the indices left unmatched.
    """
    tags = np.asarray(tags, dtype=float).reshape(-1, 3)
    n = len(tags)
    if n < 2:
        return [], list(range(n))
    ii, jj = np.triu_indices(n, k=1)
    d = np.linalg.norm(tags[ii] - tags[jj], axis=1)
    keep = d <= tau
    ii, jj, d = ii[keep], jj[keep], d[keep]
    order = np.lexsort((jj, ii, d))
    used = np.zeros(n, dtype=bool)
    pairs = []
    for k in order:
        a, b = ii[k], jj[k]
        if used[a] or used[b]:
            continue
        used[a] = used[b] = True
        pairs.append((int(a), int(b)))
    return pairs, [int(k) for k in np.flatnonzero(~used)]


def flagged_edges(panels: tuple[Panel, ...]) -> list[tuple[int, int]]:
    return [(i, j) for i, p in enumerate(panels)
            for j, f in enumerate(p.stitch_flags) if f == 1]


def recover_stitches(pattern: Pattern, cfg: StitchMatchConfig = StitchMatchConfig()) -> list[Stitch]:
    """Rebuild the stitch list from flags and tags.

    Flagged edges left without a partner within ``cfg.tau`` are reported with
    a :class:`StitchWarning`.
    """
    edges = flagged_edges(pattern.panels)
    tags = np.array([pattern.panels[i].stitch_tags[j] for i, j in edges], dtype=float)
    pairs, unmatched = match_tags(tags, cfg.tau)
    if unmatched:
        lost = [edges[k] for k in unmatched]
        warnings.warn(f"{len(lost)} flagged edge(s) without a partner: {lost}", StitchWarning,
                      stacklevel=2)
    return [Stitch(edges[a], edges[b]) for a, b in pairs]
