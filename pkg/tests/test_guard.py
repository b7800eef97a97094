import random
from fractions import Fraction

import numpy as np
import pytest

from conftest import Q
from stablebo.guard import Guard, GuardError, learn_lemma, region_bounds, relax, theta_holds
from stablebo.model import Box


def test_theta_abs(abs01):
    assert theta_holds(abs01, (Q("0.5"),), (Q("0.5"),))
    assert not theta_holds(abs01, (Q("0.5"),), (Q("0.61"),))


def test_theta_rel():
    g = Guard.relative(Q("0.1"))
    assert theta_holds(g, (Q("2.0"),), (Q("2.2"),))
    assert not theta_holds(g, (Q("2.0"),), (Q("2.21"),))


def test_theta_rel_negative_center():
    with pytest.raises(GuardError):
        theta_holds(Guard.relative(Q("0.1")), (Q("-1"),), (Q("-1"),))


def test_region_bounds(abs01, sym_box, unit_box):
    assert region_bounds(abs01, (Q("0.5"),), sym_box) == Box((Q("0.4"),), (Q("0.6"),))
    assert region_bounds(abs01, (Q("0.95"),), sym_box) == Box((Q("0.85"),), (1,))
    assert region_bounds(Guard.relative(Q("0.1")), (Q("0.5"),), unit_box) == Box((Q("0.45"),), (Q("0.55"),))


def test_relax_examples(abs01):
    assert relax(abs01, (Q("0.5"),), 0) == Box((Q("0.4"),), (Q("0.6"),))
    assert relax(abs01, (Q("0.5"),), Q("0.05")) == Box((Q("0.35"),), (Q("0.65"),))
    rel = relax(Guard.relative(Q("0.1")), (Q("1.1"),), 0)
    assert rel == Box((Fraction(1),), (Fraction(11, 9),))


def test_rel_ratio_must_be_below_one():
    with pytest.raises(GuardError):
        Guard.relative(1)
    with pytest.raises(GuardError):
        Guard.absolute(0)


def test_rel_guard_rejects_negative_domain(sym_box):
    with pytest.raises(GuardError):
        Guard.relative(Q("0.1")).check_domain(sym_box)


def test_reflexive_on_random_centers():
    rng = random.Random(1)
    guards = [Guard.absolute(Q("0.1")), Guard.relative(Q("0.3"))]
    for _ in range(1000):
        c = tuple(Fraction(rng.randint(0, 10_000), 1000) for _ in range(3))
        for g in guards:
            assert theta_holds(g, c, c)


def test_relax_zero_delta_equals_region_for_abs(abs01):
    d = (Q("0.3"), Q("-0.2"))
    unbounded = Box((-100, -100), (100, 100))
    assert relax(abs01, d, 0) == region_bounds(abs01, d, unbounded)


def test_relax_monotone_in_delta():
    rng = random.Random(4)
    for _ in range(200):
        g = Guard.absolute(Fraction(rng.randint(1, 50), 100)) if rng.random() < 0.5 else Guard.relative(
            Fraction(rng.randint(1, 90), 100)
        )
        d = tuple(Fraction(rng.randint(0, 500), 100) for _ in range(2))
        d1, d2 = sorted(Fraction(rng.randint(0, 30), 100) for _ in range(2))
        small, big = relax(g, d, d1), relax(g, d, d2)
        assert all(b <= a for a, b in zip(small.lower, big.lower))
        assert all(a <= b for a, b in zip(small.upper, big.upper))


def _nested_grid_membership(kind, radius, d, delta, xs, pitch):
    """∃z (|x - z| <= δ ∧ θ(z, d)) 를 z 격자로 직접 평가"""
    zs = np.arange(xs[0] - delta - pitch, xs[-1] + delta + pitch, pitch / 2)
    if kind == "abs":
        ok = np.abs(d - zs) <= radius
    else:
        ok = (zs >= 0) & (np.abs(d - zs) <= radius * zs)
    good = zs[ok]
    if good.size == 0:
        return np.zeros(xs.shape, dtype=bool)
    return np.abs(xs[:, None] - good[None, :]).min(axis=1) <= delta + pitch / 4


@pytest.mark.parametrize("kind", ["abs", "rel"])
def test_relax_matches_nested_grid(kind):
    rng = random.Random(7 if kind == "abs" else 9)
    pitch = 1e-3
    for _ in range(50):
        radius = Fraction(rng.randint(5, 40), 100)
        delta = Fraction(rng.randint(0, 10), 100)
        d = Fraction(rng.randint(20, 100), 100)
        g = Guard(kind, radius)
        box = relax(g, (d,), delta)
        lo, hi = float(box.lower[0]), float(box.upper[0])
        xs = np.arange(lo - 0.05, hi + 0.05, pitch)
        inside = (xs >= lo) & (xs <= hi)
        brute = _nested_grid_membership(kind, float(radius), float(d), float(delta), xs, pitch)
        away = (np.abs(xs - lo) > pitch) & (np.abs(xs - hi) > pitch)
        assert np.array_equal(inside[away], brute[away])


def test_learn_lemma(abs01):
    lemma = learn_lemma(abs01, (Q("0.5"),), Q("0.4"), 0, Q("0.8"))
    assert lemma.excludes((Q("0.5"),))
    assert lemma.excludes((Q("0.6"),))
    assert not lemma.excludes((Q("0.61"),))
    with pytest.raises(GuardError):
        learn_lemma(abs01, (Q("0.5"),), Q("0.9"), 0, Q("0.8"))


def test_guard_from_dict():
    assert Guard.from_dict({"kind": "abs", "radius": "1/10"}) == Guard.absolute(Q("0.1"))
    assert Guard.from_dict({"kind": "rel", "ratio": 0.2}).radius == Q("0.2")
    with pytest.raises(GuardError):
        Guard.from_dict({"kind": "ball", "radius": 1})
