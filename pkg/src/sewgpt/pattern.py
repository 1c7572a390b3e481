"""Sewing pattern domain types, 2D/3D geometry and JSON (de)serialization.

Coordinates are centimeters. Panels live in their own 2D frame (counterclockwise
boundary) and are placed in the world by a unit quaternion and a translation.
An edge stores only its start point and an absolute quadratic Bezier control
point; its end is the next edge's start, so every panel is closed.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError

Point2 = tuple[float, float]
Vec3 = tuple[float, float, float]
Quat = tuple[float, float, float, float]

DEFAULT_MAX_EDGES = 14
# floor((1500 - 2) / (8 * 14 + 7))
DEFAULT_MAX_PANELS = 12
UNIT_TOL = 1e-6


@dataclass(frozen=True)
class Edge:
    start: Point2
    control: Point2


@dataclass(frozen=True)
class Placement:
    rotation: Quat = (1.0, 0.0, 0.0, 0.0)
    translation: Vec3 = (0.0, 0.0, 0.0)


@dataclass(frozen=True)
class Panel:
    edges: tuple[Edge, ...]
    placement: Placement = Placement()
    stitch_tags: tuple[Vec3, ...] = ()
    stitch_flags: tuple[int, ...] = ()

    def __len__(self) -> int:
        return len(self.edges)


@dataclass(frozen=True)
class Stitch:
    a: tuple[int, int]
    b: tuple[int, int]

    def key(self) -> tuple[tuple[int, int], tuple[int, int]]:
        """Order-independent identity of the stitch."""
        return (self.a, self.b) if self.a <= self.b else (self.b, self.a)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Stitch):
            return NotImplemented
        return self.key() == other.key()

    def __hash__(self) -> int:
        return hash(self.key())


@dataclass(frozen=True)
class Pattern:
    panels: tuple[Panel, ...]
    stitches: tuple[Stitch, ...] = ()
    caption: str | None = None

    def stitch_set(self) -> set[tuple[tuple[int, int], tuple[int, int]]]:
        return {s.key() for s in self.stitches}


def make_panel(points: Sequence[Point2], controls: Sequence[Point2 | None] | None = None,
               placement: Placement = Placement()) -> Panel:
    """Build a panel from its vertex loop; a ``None`` control means a straight edge."""
    n = len(points)
    controls = controls if controls is not None else [None] * n
    edges = []
    for j, p in enumerate(points):
        c = controls[j]
        if c is None:
            q = points[(j + 1) % n]
            c = ((p[0] + q[0]) / 2.0, (p[1] + q[1]) / 2.0)
        edges.append(Edge((float(p[0]), float(p[1])), (float(c[0]), float(c[1]))))
    return Panel(tuple(edges), placement)


# -- geometry ---------------------------------------------------------------

def reconstruct_vertices(panel: Panel) -> list[Point2]:
    return [e.start for e in panel.edges]


def signed_area(points: Sequence[Point2]) -> float:
    """Shoelace area; positive for a counterclockwise loop."""
    n = len(points)
    s = 0.0
    for j in range(n):
        x0, y0 = points[j]
        x1, y1 = points[(j + 1) % n]
        s += x0 * y1 - x1 * y0
    return 0.5 * s


def bezier_point(p0, control, p1, t: float) -> tuple[float, float]:
    if not 0.0 <= t <= 1.0:
        raise DomainError(f"bezier parameter t={t} outside [0, 1]")
    u = 1.0 - t
    a, b, c = u * u, 2.0 * t * u, t * t
    return (a * p0[0] + b * control[0] + c * p1[0],
            a * p0[1] + b * control[1] + c * p1[1])


def quat_mul(q1, q2) -> Quat:
    w1, x1, y1, z1 = q1
    w2, x2, y2, z2 = q2
    return (w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2)


def quat_norm(q) -> float:
    return math.sqrt(sum(c * c for c in q))


def rotate_by_quaternion(q, v) -> Vec3:
    """Rotate ``v`` by the unit quaternion ``q`` = (w, x, y, z), i.e. q v q^-1."""
    if abs(quat_norm(q) - 1.0) > UNIT_TOL:
        raise DomainError(f"quaternion {tuple(q)} is not unit length")
    w, x, y, z = q
    vx, vy, vz = v
    # v + 2w (u x v) + 2 u x (u x v), with u the vector part
    cx = y * vz - z * vy
    cy = z * vx - x * vz
    cz = x * vy - y * vx
    ccx = y * cz - z * cy
    ccy = z * cx - x * cz
    ccz = x * cy - y * cx
    return (vx + 2.0 * (w * cx + ccx),
            vy + 2.0 * (w * cy + ccy),
            vz + 2.0 * (w * cz + ccz))


def axis_angle_quat(axis: Sequence[float], degrees: float) -> Quat:
    ax = np.asarray(axis, dtype=float)
    ax = ax / np.linalg.norm(ax)
    half = math.radians(degrees) / 2.0
    s = math.sin(half)
    return (math.cos(half), float(ax[0] * s), float(ax[1] * s), float(ax[2] * s))


def to_world(placement: Placement, p: Point2) -> Vec3:
    x, y, z = rotate_by_quaternion(placement.rotation, (p[0], p[1], 0.0))
    tx, ty, tz = placement.translation
    return (x + tx, y + ty, z + tz)


def edge_midpoint_3d(panel: Panel, edge_index: int) -> Vec3:
    n = len(panel.edges)
    if not 0 <= edge_index < n:
        raise IndexError(f"edge {edge_index} out of range for a {n}-edge panel")
    e = panel.edges[edge_index]
    p1 = panel.edges[(edge_index + 1) % n].start
    return to_world(panel.placement, bezier_point(e.start, e.control, p1, 0.5))


# -- validation ---------------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    location: str
    rule: str
    message: str
    severity: str = "error"


def _finite(values: Iterable[float]) -> bool:
    return all(math.isfinite(v) for v in values)


def validate_pattern(pattern: Pattern, max_edges: int = DEFAULT_MAX_EDGES,
                     max_panels: int = DEFAULT_MAX_PANELS) -> list[Violation]:
    """Check every structural invariant and return the violations found.

    Clockwise panels are reported with ``severity="warning"``; callers
    deciding validity should look at errors only (see :func:`errors_only`).
    """
    out: list[Violation] = []

    def add(loc, rule, msg, severity="error"):
        out.append(Violation(loc, rule, msg, severity))

    n_panels = len(pattern.panels)
    if not 1 <= n_panels <= max_panels:
        add("pattern", "PANEL_COUNT", f"{n_panels} panels, allowed 1..{max_panels}")

    for i, panel in enumerate(pattern.panels):
        loc = f"panel[{i}]"
        n = len(panel.edges)
        if n < 3:
            add(loc, "MIN_EDGES", f"{n} edges, need at least 3")
        if n > max_edges:
            add(loc, "MAX_EDGES", f"{n} edges, limit is {max_edges}")
        coords = [c for e in panel.edges for c in (*e.start, *e.control)]
        if not _finite(coords):
            add(loc, "NONFINITE", "edge coordinates must be finite")
        elif n >= 1:
            for j, e in enumerate(panel.edges):
                nxt = panel.edges[(j + 1) % n].start
                if e.start == nxt and e.control == e.start:
                    add(f"{loc}.edge[{j}]", "DEGENERATE_EDGE", "zero-length edge")
            if n >= 3 and signed_area(reconstruct_vertices(panel)) < 0:
                add(loc, "CLOCKWISE", "panel boundary runs clockwise", "warning")
        rot = panel.placement.rotation
        if len(rot) != 4 or not _finite(rot):
            add(loc, "NONFINITE", "rotation must be 4 finite numbers")
        elif abs(quat_norm(rot) - 1.0) > UNIT_TOL:
            add(loc, "UNIT_QUATERNION", f"|rotation| = {quat_norm(rot):.6g}")
        tr = panel.placement.translation
        if len(tr) != 3 or not _finite(tr):
            add(loc, "NONFINITE", "translation must be 3 finite numbers")
        if len(panel.stitch_tags) != n:
            add(loc, "TAG_COUNT", f"{len(panel.stitch_tags)} stitch tags for {n} edges")
        if len(panel.stitch_flags) != n:
            add(loc, "FLAG_COUNT", f"{len(panel.stitch_flags)} stitch flags for {n} edges")
        for j, flag in enumerate(panel.stitch_flags):
            if flag not in (0, 1):
                add(f"{loc}.edge[{j}]", "FLAG_VALUE", f"stitch flag {flag!r} is not 0/1")
            elif flag == 0 and j < len(panel.stitch_tags) and any(panel.stitch_tags[j]):
                add(f"{loc}.edge[{j}]", "UNFLAGGED_TAG", "unstitched edge has a nonzero tag")
        for j, tag in enumerate(panel.stitch_tags):
            if len(tag) != 3 or not _finite(tag):
                add(f"{loc}.edge[{j}]", "NONFINITE", "stitch tag must be 3 finite numbers")

    used: dict[tuple[int, int], int] = {}
    for k, s in enumerate(pattern.stitches):
        loc = f"stitch[{k}]"
        if s.a == s.b:
            add(loc, "STITCH_SELF", f"stitch joins edge {s.a} to itself")
        ok = True
        for end in (s.a, s.b):
            p, e = end
            if not (0 <= p < n_panels and 0 <= e < len(pattern.panels[p].edges)):
                add(loc, "STITCH_INDEX", f"edge {end} does not exist")
                ok = False
        if not ok:
            continue
        for end in {s.a, s.b}:
            if end in used:
                add(loc, "STITCH_REUSED", f"edge {end} already used by stitch[{used[end]}]")
            else:
                used[end] = k

    for i, panel in enumerate(pattern.panels):
        for j, flag in enumerate(panel.stitch_flags):
            if (flag == 1) != ((i, j) in used):
                add(f"panel[{i}].edge[{j}]", "FLAG_STITCH_MISMATCH",
                    f"flag {flag} disagrees with the stitch list")
    return out


def errors_only(report: Iterable[Violation]) -> list[Violation]:
    return [v for v in report if v.severity == "error"]


# -- JSON -----------------------------------------------------------------

def pattern_to_dict(pattern: Pattern) -> dict:
    panels = []
    for panel in pattern.panels:
        panels.append({
            "edges": [{"start": list(e.start), "control": list(e.control)} for e in panel.edges],
            "rotation": list(panel.placement.rotation),
            "translation": list(panel.placement.translation),
            "stitch_tags": [list(t) for t in panel.stitch_tags],
            "stitch_flags": list(panel.stitch_flags),
        })
    out = {
        "panels": panels,
        "stitches": [{"a": list(s.a), "b": list(s.b)} for s in pattern.stitches],
    }
    if pattern.caption is not None:
        out["caption"] = pattern.caption
    return out


def pattern_from_dict(data: dict) -> Pattern:
    """Parse the pattern JSON schema.

    Missing ``stitch_tags``/``stitch_flags`` are recomputed from the stitch
    list in the default tag frame.
    """
    try:
        panels = []
        needs_tags = False
        for p in data["panels"]:
            edges = tuple(Edge(tuple(map(float, e["start"])), tuple(map(float, e["control"])))
                          for e in p["edges"])
            placement = Placement(tuple(map(float, p.get("rotation", (1, 0, 0, 0)))),
                                  tuple(map(float, p.get("translation", (0, 0, 0)))))
            if "stitch_tags" not in p or "stitch_flags" not in p:
                needs_tags = True
            tags = tuple(tuple(map(float, t)) for t in p.get("stitch_tags", ()))
            flags = tuple(int(f) for f in p.get("stitch_flags", ()))
            panels.append(Panel(edges, placement, tags, flags))
        stitches = tuple(Stitch(tuple(map(int, s["a"])), tuple(map(int, s["b"])))
                         for s in data.get("stitches", ()))
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"not a pattern document: {exc!r}") from exc
    pattern = Pattern(tuple(panels), stitches, data.get("caption"))
    if needs_tags:
        from .stitches import assign_stitch_tags
        pattern = assign_stitch_tags(pattern)
    return pattern


def load_pattern(path: str | Path) -> Pattern:
    with open(path, encoding="utf-8") as fh:
        return pattern_from_dict(json.load(fh))


def dump_pattern(pattern: Pattern, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(pattern_to_dict(pattern), fh, indent=1)
        fh.write("\n")


def with_caption(pattern: Pattern, caption: str | None) -> Pattern:
    return replace(pattern, caption=caption)
