import random
from fractions import Fraction

import numpy as np
import pytest
from scipy.optimize import linprog

from stablebo.lp import LinearConstraint, lp_feasible


def C(coeffs, relation, rhs):
    return LinearConstraint.of(coeffs, relation, rhs)


def test_closed_interval_feasible():
    point = lp_feasible([C({"x": 1}, ">=", 0), C({"x": 1}, "<=", 1)])
    assert point is not None
    assert 0 <= point["x"] <= 1


def test_strict_empty_interval_infeasible():
    assert lp_feasible([C({"x": 1}, ">=", 1), C({"x": 1}, "<", 1)]) is None


def test_tiny_open_interval_exact():
    tiny = Fraction(1, 10**9)
    point = lp_feasible([C({"x": 1}, ">", 0), C({"x": 1}, "<", tiny)])
    assert point is not None
    assert 0 < point["x"] < tiny
    assert isinstance(point["x"], Fraction)


def test_equality_system():
    # x + y = 3, x - y = 1
    point = lp_feasible([C({"x": 1, "y": 1}, "==", 3), C({"x": 1, "y": -1}, "==", 1)])
    assert point == {"x": 2, "y": 1}


def test_redundant_equalities():
    cons = [
        C({"x": 1, "y": 1}, "==", 2),
        C({"x": 2, "y": 2}, "==", 4),
        C({"x": 1}, ">=", Fraction(1, 2)),
    ]
    point = lp_feasible(cons)
    assert point is not None
    assert all(c.holds(point) for c in cons)


def test_negative_free_variables():
    point = lp_feasible([C({"x": 1}, "<=", -5), C({"x": 1}, ">=", -7), C({"y": 1}, "==", Fraction(-1, 3))])
    assert -7 <= point["x"] <= -5
    assert point["y"] == Fraction(-1, 3)


def test_strict_versus_closed_boundary():
    closed = [C({"x": 1, "y": 1}, "<=", 0), C({"x": 1}, ">=", 0), C({"y": 1}, ">=", 0)]
    assert lp_feasible(closed) == {"x": 0, "y": 0}
    strict = closed[:2] + [C({"y": 1}, ">", 0)]
    assert lp_feasible(strict) is None


def test_strict_witness_satisfies_all():
    cons = [
        C({"x": 1}, ">", Fraction(1, 3)),
        C({"x": 1, "y": 1}, "<", 1),
        C({"y": 1}, ">", Fraction(1, 4)),
        C({"x": 1, "y": -1}, "==", Fraction(1, 10)),
    ]
    point = lp_feasible(cons)
    assert point is not None
    assert all(c.holds(point) for c in cons)


def test_unknown_relation():
    with pytest.raises(ValueError):
        C({"x": 1}, "=>", 0)


def _linprog_feasible(cons, names):
    A_ub, b_ub, A_eq, b_eq = [], [], [], []
    for c in cons:
        row = [float(dict(c.coeffs).get(v, 0)) for v in names]
        if c.relation == "<=":
            A_ub.append(row)
            b_ub.append(float(c.rhs))
        elif c.relation == ">=":
            A_ub.append([-a for a in row])
            b_ub.append(-float(c.rhs))
        else:
            A_eq.append(row)
            b_eq.append(float(c.rhs))
    res = linprog(
        np.zeros(len(names)),
        A_ub=A_ub or None,
        b_ub=b_ub or None,
        A_eq=A_eq or None,
        b_eq=b_eq or None,
        bounds=[(-10, 10)] * len(names),
        method="highs",
    )
    return res.status == 0


def test_agrees_with_linprog_on_random_systems():
    rng = random.Random(21)
    names = ["a", "b", "c"]
    for _ in range(150):
        cons = []
        for _ in range(rng.randint(2, 5)):
            coeffs = {v: rng.randint(-3, 3) for v in names}
            relation = rng.choice(["<=", ">=", "<=", ">=", "=="])
            cons.append(C(coeffs, relation, rng.randint(-4, 4)))
        for v in names:
            cons.append(C({v: 1}, ">=", -10))
            cons.append(C({v: 1}, "<=", 10))
        point = lp_feasible(cons)
        assert (point is not None) == _linprog_feasible(cons, names)
        if point is not None:
            assert all(c.holds(point) for c in cons)
