import hashlib
import json
import warnings

import numpy as np
import pytest

from sewgpt.codec import QuantConfig, encode, fit_stats
from sewgpt.pattern import load_pattern, validate_pattern
from sewgpt.stitches import recover_stitches
from sewgpt.synth import KINDS, TemplateSpec, build_dataset, synth_pattern

# bins per template: product of the caption choices
CAPTION_COMBOS = {"skirt_2panel": 4 * 3 * 2, "sleeveless_dress": 2 * 3 * 2 * 2,
                  "tee": 2 * 2 * 2 * 2, "pants": 2 * 3 * 2}


@pytest.mark.parametrize("kind", KINDS)
def test_deterministic(kind):
    assert synth_pattern(TemplateSpec(kind), 42) == synth_pattern(TemplateSpec(kind), 42)


@pytest.mark.parametrize("kind", KINDS)
def test_valid_and_codec_safe(kind):
    cfg = QuantConfig()
    pats = [synth_pattern(TemplateSpec(kind), s)[0] for s in range(25)]
    stats = fit_stats(pats)
    for p in pats:
        assert validate_pattern(p) == []
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            assert set(recover_stitches(p)) == set(p.stitches)
        assert len(encode(p, stats, cfg)) <= cfg.max_tokens
        assert max(len(panel.edges) for panel in p.panels) <= cfg.K


def test_skirt_length_240():
    pats = [synth_pattern(TemplateSpec("skirt_2panel"), s)[0] for s in range(30)]
    stats = fit_stats(pats)
    assert {len(encode(p, stats)) for p in pats} == {240}


def test_curved_variant_exercised():
    curved = straight = 0
    for s in range(20):
        p, cap = synth_pattern(TemplateSpec("skirt_2panel"), s)
        e = p.panels[0].edges[0]
        nxt = p.panels[0].edges[1].start
        mid = ((e.start[0] + nxt[0]) / 2, (e.start[1] + nxt[1]) / 2)
        is_curved = not np.allclose(e.control, mid)
        assert is_curved == ("curved" in cap)
        curved += is_curved
        straight += not is_curved
    assert curved and straight


@pytest.mark.parametrize("kind", KINDS)
def test_caption_grammar_injective(kind):
    # every bin assignment is reachable and yields its own caption
    caps = {synth_pattern(TemplateSpec(kind), s)[1] for s in range(1500)}
    assert len(caps) == CAPTION_COMBOS[kind]


def test_ranges():
    with pytest.raises(ValueError):
        TemplateSpec("hat")
    with pytest.raises(ValueError):
        TemplateSpec("skirt_2panel", {"length": (80.0, 40.0)})
    fixed = TemplateSpec("skirt_2panel", {"length": (90.0, 90.0)})
    assert "long" in synth_pattern(fixed, 0)[1]


def test_build_dataset(tmp_path):
    specs = [TemplateSpec(k) for k in KINDS]
    manifest = build_dataset(specs, 10, 7, tmp_path / "a")
    items = manifest["items"]
    assert len(items) == 40 and len(list((tmp_path / "a").glob("*_*.json"))) == 40
    assert sum(i["split"] == "train" for i in items) == 36
    assert sum(i["split"] == "val" for i in items) == 4
    for k in KINDS:
        assert sum(i["split"] == "val" and i["template"] == k for i in items) == 1
    on_disk = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert on_disk == manifest
    first = items[0]
    assert load_pattern(tmp_path / "a" / first["file"]).caption == first["caption"]

    build_dataset(specs, 10, 7, tmp_path / "b")
    digest = lambda d: hashlib.sha256((d / "manifest.json").read_bytes()).hexdigest()  # noqa
    assert digest(tmp_path / "a") == digest(tmp_path / "b")
    stats = fit_stats(load_pattern(tmp_path / "a" / i["file"]) for i in items)
    assert min(stats.edge_std) > 0


def test_skirt_stats_reproducible(tmp_path):
    blobs = []
    for name in ("x", "y"):
        build_dataset([TemplateSpec("skirt_2panel")], 100, 3, tmp_path / name)
        pats = [load_pattern(f) for f in sorted((tmp_path / name).glob("skirt_*.json"))]
        blobs.append(fit_stats(pats).to_json())
    assert blobs[0] == blobs[1]
