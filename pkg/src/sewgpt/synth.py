"""Seeded parametric garment templates standing in for a real pattern dataset.

Every template places its panels on a T-pose-like layout (waist at y=100 cm,
front panels at z=+15, back panels at z=-15, sleeves along the x axis) and
uses a fixed panel order:

* ``skirt_2panel``: front, back
* ``sleeveless_dress``: top front, top back, skirt front, skirt back
* ``tee``: front, back, right sleeve, left sleeve [, right cuff, left cuff]
* ``pants``: right front, left front, right back, left back
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .pattern import Pattern, Placement, Stitch, axis_angle_quat, dump_pattern, make_panel
from .stitches import assign_stitch_tags

KINDS = ("skirt_2panel", "sleeveless_dress", "tee", "pants")

IDENTITY = (1.0, 0.0, 0.0, 0.0)
FLIP_Y = (0.0, 0.0, 1.0, 0.0)  # 180 degrees about y: (x, y, z) -> (-x, y, -z)
FRONT_Z, BACK_Z = 15.0, -15.0
WAIST_Y = 100.0

DEFAULT_RANGES: dict[str, dict[str, tuple[float, float]]] = {
    "skirt_2panel": {"waist": (30.0, 46.0), "flare": (0.0, 40.0), "length": (35.0, 100.0),
                     "hem_curve": (3.0, 8.0)},
    "sleeveless_dress": {"waist": (32.0, 44.0), "bust_extra": (4.0, 14.0), "side": (18.0, 24.0),
                         "armhole": (14.0, 20.0), "neck": (12.0, 18.0), "shoulder": (6.0, 10.0),
                         "neck_depth": (4.0, 20.0), "flare": (0.0, 30.0), "length": (40.0, 100.0),
                         "hem_curve": (3.0, 8.0)},
    "tee": {"width": (40.0, 60.0), "side": (35.0, 50.0), "armhole": (18.0, 24.0),
            "neck": (14.0, 18.0), "shoulder": (8.0, 12.0), "neck_depth": (4.0, 10.0),
            "sleeve_short": (15.0, 25.0), "sleeve_long": (50.0, 60.0), "arm": (30.0, 38.0),
            "cuff_ratio": (0.7, 1.0), "cap": (8.0, 12.0), "cuff_height": (4.0, 8.0),
            "hem_curve": (2.0, 6.0)},
    "pants": {"hem": (14.0, 30.0), "waist": (18.0, 24.0), "length": (30.0, 105.0),
              "rise": (22.0, 30.0), "crotch_front": (4.0, 8.0), "crotch_back": (8.0, 14.0),
              "center": (1.0, 3.0), "hem_curve": (2.0, 5.0)},
}


@dataclass(frozen=True)
class TemplateSpec:
    kind: str
    ranges: dict[str, tuple[float, float]] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown template {self.kind!r}; choose from {KINDS}")
        merged = dict(DEFAULT_RANGES[self.kind])
        merged.update(self.ranges)
        for name, (lo, hi) in merged.items():
            if not lo <= hi:
                raise ValueError(f"empty range for {name}: {(lo, hi)}")
        object.__setattr__(self, "ranges", merged)


def _bin(value: float, edges: Sequence[float], words: Sequence[str]) -> str:
    for edge, word in zip(edges, words):
        if value < edge:
            return word
    return words[-1]


def _trapezoid(waist, hem, length, curve):
    pts = [(-hem / 2, 0.0), (hem / 2, 0.0), (waist / 2, length), (-waist / 2, length)]
    controls = [(0.0, -curve) if curve else None, None, None, None]
    return pts, controls


def _skirt(p, rng):
    waist, hem, length = p["waist"], p["waist"] + p["flare"], p["length"]
    curve = p["hem_curve"] if p["curved"] else 0.0
    pts, ctl = _trapezoid(waist, hem, length, curve)
    ty = WAIST_Y - length
    panels = (make_panel(pts, ctl, Placement(IDENTITY, (0.0, ty, FRONT_Z))),
              make_panel(pts, ctl, Placement(FLIP_Y, (0.0, ty, BACK_Z))))
    stitches = (Stitch((0, 1), (1, 3)), Stitch((0, 3), (1, 1)))
    caption = "a {} {} skirt".format(
        _bin(length, (50, 70, 85), ("mini", "knee-length", "midi", "long")),
        _bin(p["flare"], (10, 25), ("straight", "a-line", "flared")))
    if p["curved"]:
        caption += " with a curved hem"
    return panels, stitches, caption


def _bodice(bottom, bust, side, armhole, neck, shoulder, depth, hem_curve=0.0):
    """Eight-edge torso panel: bottom, right side, right armhole, right shoulder,
    neckline, left shoulder, left armhole, left side."""
    top = side + armhole
    sx = neck / 2 + shoulder
    pts = [(-bottom / 2, 0.0), (bottom / 2, 0.0), (bust / 2, side), (sx, top),
           (neck / 2, top), (-neck / 2, top), (-sx, top), (-bust / 2, side)]
    ctl = [(0.0, -hem_curve) if hem_curve else None, None,
           (sx - 1.0, side + 0.35 * armhole), None,
           (0.0, top - 2.0 * depth), None,
           (-sx + 1.0, side + 0.35 * armhole), None]
    return pts, ctl, top


def _dress(p, rng):
    waist = p["waist"]
    pts, ctl, _ = _bodice(waist, waist + p["bust_extra"], p["side"], p["armhole"], p["neck"],
                          p["shoulder"], p["neck_depth"])
    length = p["length"]
    curve = p["hem_curve"] if p["curved"] else 0.0
    spts, sctl = _trapezoid(waist, waist + p["flare"], length, curve)
    ty = WAIST_Y - length
    panels = (make_panel(pts, ctl, Placement(IDENTITY, (0.0, WAIST_Y, FRONT_Z))),
              make_panel(pts, ctl, Placement(FLIP_Y, (0.0, WAIST_Y, BACK_Z))),
              make_panel(spts, sctl, Placement(IDENTITY, (0.0, ty, FRONT_Z))),
              make_panel(spts, sctl, Placement(FLIP_Y, (0.0, ty, BACK_Z))))
    stitches = (Stitch((0, 1), (1, 7)), Stitch((0, 7), (1, 1)),
                Stitch((0, 3), (1, 5)), Stitch((0, 5), (1, 3)),
                Stitch((0, 0), (2, 2)), Stitch((1, 0), (3, 2)),
                Stitch((2, 1), (3, 3)), Stitch((2, 3), (3, 1)))
    caption = "a {} {} sleeveless dress with a {} neckline".format(
        _bin(p["flare"], (15,), ("fitted", "flared")),
        _bin(length, (55, 80), ("short", "knee-length", "long")),
        _bin(p["neck_depth"], (10,), ("round", "deep")))
    if p["curved"]:
        caption += " and a curved hem"
    return panels, stitches, caption


def _tee(p, rng):
    width = p["width"]
    side, armhole = p["side"], p["armhole"]
    curve = p["hem_curve"] if p["curved"] else 0.0
    pts, ctl, top = _bodice(width, width, side, armhole, p["neck"], p["shoulder"],
                            p["neck_depth"], curve)
    ty = 150.0 - top
    long_sleeves = rng.random() < 0.5
    cuffs = rng.random() < 0.5
    sl = p["sleeve_long"] if long_sleeves else p["sleeve_short"]
    arm, cap = p["arm"], p["cap"]
    cuff_w = arm * p["cuff_ratio"]
    spts = [(-cuff_w / 2, 0.0), (cuff_w / 2, 0.0), (arm / 2, sl), (0.0, sl + cap), (-arm / 2, sl)]
    sctl = [None, None, (arm / 4 + 1.0, sl + cap * 0.75), (-arm / 4 - 1.0, sl + cap * 0.75), None]
    sy = ty + side + armhole / 2
    reach = width / 2 + sl + cap
    rs = Placement(axis_angle_quat((0, 0, 1), 90.0), (reach, sy, 0.0))
    ls = Placement(axis_angle_quat((0, 0, 1), -90.0), (-reach, sy, 0.0))
    panels = [make_panel(pts, ctl, Placement(IDENTITY, (0.0, ty, FRONT_Z))),
              make_panel(pts, ctl, Placement(FLIP_Y, (0.0, ty, BACK_Z))),
              make_panel(spts, sctl, rs), make_panel(spts, sctl, ls)]
    stitches = [Stitch((0, 1), (1, 7)), Stitch((0, 7), (1, 1)),
                Stitch((0, 3), (1, 5)), Stitch((0, 5), (1, 3)),
                Stitch((2, 1), (2, 4)), Stitch((2, 2), (0, 2)), Stitch((2, 3), (1, 6)),
                Stitch((3, 1), (3, 4)), Stitch((3, 2), (1, 2)), Stitch((3, 3), (0, 6))]
    if cuffs:
        ch = p["cuff_height"]
        cpts = [(-cuff_w / 2, 0.0), (cuff_w / 2, 0.0), (cuff_w / 2, ch), (-cuff_w / 2, ch)]
        panels.append(make_panel(cpts, None, Placement(rs.rotation, (reach + ch, sy, 0.0))))
        panels.append(make_panel(cpts, None, Placement(ls.rotation, (-reach - ch, sy, 0.0))))
        stitches += [Stitch((4, 2), (2, 0)), Stitch((4, 1), (4, 3)),
                     Stitch((5, 2), (3, 0)), Stitch((5, 1), (5, 3))]
    caption = "a {} tee with {} sleeves".format(
        _bin(width, (50,), ("slim", "wide")), "long" if long_sleeves else "short")
    if cuffs:
        caption += " and cuffs"
    if p["curved"]:
        caption += ", curved hem"
    return tuple(panels), tuple(stitches), caption


def _pants(p, rng):
    length, rise = p["length"], p["rise"]
    hem, waist, cf = p["hem"], p["waist"], p["center"]
    curve = p["hem_curve"] if p["curved"] else 0.0

    def leg(crotch):
        pts = [(0.0, 0.0), (hem, 0.0), (waist, length), (-cf, length),
               (-cf - crotch, length - rise)]
        ctl = [(hem / 2, -curve) if curve else None, None, None,
               (-cf - crotch * 0.2, length - rise * 0.3), None]
        return pts, ctl

    fp, fc = leg(p["crotch_front"])
    bp, bc = leg(p["crotch_back"])
    ty = WAIST_Y - length
    panels = (make_panel(fp, fc, Placement(IDENTITY, (cf, ty, FRONT_Z))),
              make_panel(fp, fc, Placement(FLIP_Y, (-cf, ty, FRONT_Z))),
              make_panel(bp, bc, Placement(IDENTITY, (cf, ty, BACK_Z))),
              make_panel(bp, bc, Placement(FLIP_Y, (-cf, ty, BACK_Z))))
    stitches = (Stitch((0, 1), (2, 1)), Stitch((0, 4), (2, 4)),
                Stitch((1, 1), (3, 1)), Stitch((1, 4), (3, 4)),
                Stitch((0, 3), (1, 3)), Stitch((2, 3), (3, 3)))
    caption = "a pair of {} {} pants".format(
        _bin(hem, (22,), ("slim", "wide")),
        _bin(length, (50, 80), ("short", "cropped", "full-length")))
    if p["curved"]:
        caption += " with a curved hem"
    return panels, stitches, caption


_BUILDERS = {"skirt_2panel": _skirt, "sleeveless_dress": _dress, "tee": _tee, "pants": _pants}


def synth_pattern(spec: TemplateSpec, seed: int) -> tuple[Pattern, str]:
    rng = np.random.default_rng(seed)
    params = {name: float(rng.uniform(lo, hi)) for name, (lo, hi) in sorted(spec.ranges.items())}
    params["curved"] = bool(rng.random() < 0.5)
    panels, stitches, caption = _BUILDERS[spec.kind](params, rng)
    pattern = assign_stitch_tags(Pattern(tuple(panels), tuple(stitches), caption))
    return pattern, caption


def _hash64(text: str) -> int:
    return int.from_bytes(hashlib.blake2b(text.encode(), digest_size=8).digest(), "little")


def item_seed(seed: int, kind: str, index: int) -> int:
    return _hash64(f"{seed}/{kind}/{index}") >> 1


def build_dataset(specs: Sequence[TemplateSpec], n_per_spec: int, seed: int,
                  out_dir: str | Path) -> dict:
    """Write ``n_per_spec`` pattern files per template plus ``manifest.json``.

    Within each template the items whose seed hashes lowest form the
    validation split (10%, rounded); the rest are training data.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    items = []
    for spec in specs:
        seeds = [item_seed(seed, spec.kind, i) for i in range(n_per_spec)]
        n_val = n_per_spec - int(round(0.9 * n_per_spec))
        val = set(sorted(seeds, key=lambda s: _hash64(str(s)))[:n_val])
        for i, s in enumerate(seeds):
            pattern, caption = synth_pattern(spec, s)
            name = f"{spec.kind}_{i:04d}.json"
            dump_pattern(pattern, out / name)
            items.append({"file": name, "caption": caption, "template": spec.kind, "seed": s,
                          "split": "val" if s in val else "train"})
    manifest = {"items": items}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n",
                                       encoding="utf-8")
    return manifest
