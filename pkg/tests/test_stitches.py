import itertools
import warnings

import numpy as np
import pytest

from sewgpt.errors import InvalidStitchGraph
from sewgpt.pattern import Pattern, Placement, Stitch, make_panel
from sewgpt.stitches import (StitchMatchConfig, StitchWarning, assign_stitch_tags, match_tags,
                             recover_stitches)
from sewgpt.synth import KINDS, TemplateSpec, synth_pattern

TAU = 0.05


def brute_force_matching(tags, tau):
    """Best matching by exhaustive search.

    Among all sets of disjoint pairs with distance <= tau, prefer the most
    pairs, then the least total distance.
    """
    n = len(tags)
    d = lambda i, j: float(np.linalg.norm(tags[i] - tags[j]))  # noqa: E731
    best = (0, 0.0, frozenset())

    def search(free, chosen, cost):
        nonlocal best
        key = (len(chosen), -cost)
        if key > (best[0], -best[1]):
            best = (len(chosen), cost, frozenset(chosen))
        if len(free) < 2:
            return
        first, rest = free[0], free[1:]
        search(rest, chosen, cost)
        for k, j in enumerate(rest):
            if d(first, j) <= tau:
                search(rest[:k] + rest[k + 1:], chosen + [(first, j)], cost + d(first, j))
    search(list(range(n)), [], 0.0)
    return best[2]


def random_case(rng, n):
    """n tags made of noisy pairs around well separated centres plus singletons."""
    centres = []
    while len(centres) < n:
        c = rng.random(3)
        if all(np.linalg.norm(c - o) > 4 * TAU for o in centres):
            centres.append(c)
    tags = []
    k = 0
    while len(tags) < n:
        c = centres[k]
        k += 1
        group = 2 if n - len(tags) >= 2 and rng.random() < 0.8 else 1
        for _ in range(group):
            tags.append(c + rng.uniform(-1, 1, 3) * TAU / 5)
    order = rng.permutation(n)
    return np.array(tags)[order]


def triangle(placement=Placement()):
    return make_panel([(0, 0), (2, 0), (1, 1)], placement=placement)


def test_greedy_equals_brute_force(rng):
    for _ in range(100):
        n = int(rng.integers(0, 9))
        tags = random_case(rng, n)
        pairs, unmatched = match_tags(tags, TAU)
        assert frozenset(pairs) == brute_force_matching(tags, TAU)
        assert sorted(unmatched + [x for p in pairs for x in p]) == list(range(n))


def test_aabb():
    a, b = np.array([0.1, 0.1, 0.1]), np.array([0.5, 0.5, 0.5])
    tags = np.array([a, b, a, b])
    pairs, unmatched = match_tags(tags, TAU)
    assert sorted(pairs) == [(0, 2), (1, 3)]
    perfect = [[(0, 1), (2, 3)], [(0, 2), (1, 3)], [(0, 3), (1, 2)]]
    cost = [sum(np.linalg.norm(tags[i] - tags[j]) for i, j in m) for m in perfect]
    assert sorted(pairs) == perfect[int(np.argmin(cost))]
    assert unmatched == []


def test_identical_pair_and_singleton():
    pairs, unmatched = match_tags(np.array([[0.3, 0.3, 0.3]] * 2), TAU)
    assert pairs == [(0, 1)] and unmatched == []
    pairs, unmatched = match_tags(np.array([[0.3, 0.3, 0.3]]), TAU)
    assert pairs == [] and unmatched == [0]


def test_tie_break_is_lexicographic():
    tags = np.array([[0.0, 0, 0], [0.01, 0, 0], [0.02, 0, 0]])
    pairs, _ = match_tags(tags, TAU)
    assert pairs == [(0, 1)]


def test_assign_tags_mean_of_midpoints():
    lo_hi = (np.zeros(3), np.ones(3))
    a = triangle()
    b = triangle(Placement(translation=(0.2, 0, 0)))
    p = assign_stitch_tags(Pattern((a, b), (Stitch((0, 0), (1, 0)),)), lo_hi)
    # midpoints (1, 0, 0) and (1.2, 0, 0)
    assert p.panels[0].stitch_tags[0] == pytest.approx((1.1, 0, 0))
    assert p.panels[1].stitch_tags[0] == p.panels[0].stitch_tags[0]
    assert p.panels[0].stitch_flags == (1, 0, 0)
    assert p.panels[0].stitch_tags[1] == (0, 0, 0)


def test_assign_tags_rejects_reuse():
    a, b = triangle(), triangle()
    with pytest.raises(InvalidStitchGraph):
        assign_stitch_tags(Pattern((a, b), (Stitch((0, 0), (1, 0)), Stitch((0, 0), (1, 1)))))


def test_single_flag_warns():
    p = assign_stitch_tags(Pattern((triangle(), triangle()), (Stitch((0, 0), (1, 0)),)))
    lonely = Pattern((p.panels[0], triangle()))
    with pytest.warns(StitchWarning):
        assert recover_stitches(lonely) == []


@pytest.mark.parametrize("kind", KINDS)
def test_recovery_on_templates(kind):
    for seed in range(10):
        p, _ = synth_pattern(TemplateSpec(kind), seed)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            assert set(recover_stitches(p)) == set(p.stitches)


def test_recovery_robust_to_noise(rng):
    p, _ = synth_pattern(TemplateSpec("sleeveless_dress"), 4)
    panels = []
    for panel in p.panels:
        tags = tuple(tuple(np.array(t) + rng.uniform(-1, 1, 3) * TAU / 4 / np.sqrt(3)) if f else t
                     for t, f in zip(panel.stitch_tags, panel.stitch_flags))
        panels.append(type(panel)(panel.edges, panel.placement, tags, panel.stitch_flags))
    noisy = Pattern(tuple(panels), p.stitches)
    assert set(recover_stitches(noisy)) == set(p.stitches)


def test_recovery_order_independent():
    p, _ = synth_pattern(TemplateSpec("tee"), 2)
    n = len(p.panels)
    perm = list(reversed(range(n)))
    where = {old: new for new, old in enumerate(perm)}
    moved = Pattern(tuple(p.panels[i] for i in perm),
                    tuple(Stitch((where[s.a[0]], s.a[1]), (where[s.b[0]], s.b[1]))
                          for s in p.stitches))
    assert set(recover_stitches(moved)) == set(moved.stitches)


def test_config_validation():
    with pytest.raises(ValueError):
        StitchMatchConfig(tau=0)


def test_brute_force_is_exhaustive():
    # sanity: the oracle enumerates all 15 perfect matchings of 6 items
    tags = np.zeros((6, 3))
    assert len(brute_force_matching(tags, TAU)) == 3
    assert sum(1 for _ in itertools.combinations(range(6), 2)) == 15
