import random
import sys
from fractions import Fraction

import pytest

from conftest import Q
from stablebo.certifier import BackendError, candidate_query, check_witness, counterexample_query, solve
from stablebo.guard import Guard, learn_lemma, region_bounds
from stablebo.instances import random_relu
from stablebo.model import evaluate
from stablebo.smtlib import emit_smtlib, external_solve, parse_response

IDENTITY_SCRIPT = """\
; stablebo query
(set-logic QF_LRA)
(set-option :produce-models true)
(declare-fun x1 () Real)
(declare-fun y () Real)
; domain
(assert (and (<= 0.0 x1) (<= x1 1.0)))
; model
(assert (= y x1))
; threshold
(assert (>= y (/ 1.0 2.0)))
(check-sat)
(get-model)
"""


def fake_solver(tmp_path, output):
    script = tmp_path / "fake_solver.py"
    script.write_text(f"import sys\nsys.stdin.read()\nsys.stdout.write({output!r})\n")
    return f"{sys.executable} {script}"


@pytest.fixture
def identity_query(identity_model, unit_box):
    return candidate_query(identity_model.constraint_form, unit_box, Q("0.5"))


def test_emit_identity_golden(identity_query):
    assert emit_smtlib(identity_query) == IDENTITY_SCRIPT


def test_emit_is_deterministic(hat_model, hat_domain):
    query = candidate_query(hat_model.constraint_form, hat_domain, Q("1.2"))
    text = emit_smtlib(query)
    assert text == emit_smtlib(candidate_query(hat_model.constraint_form, hat_domain, Q("1.2")))
    assert "(assert (or (= r1_1 0.0) (= r1_1 p1_1)))" in text
    assert "(assert (>= y (/ 6.0 5.0)))" in text
    assert "(assert (and (<= (- 1.0) x1) (<= x1 1.0)))" in text


def test_emit_ignores_relu_cap():
    model, domain = random_relu(2, [12, 12], seed=0)
    text = emit_smtlib(candidate_query(model.constraint_form, domain, 0))
    assert text.count("(assert (or (= r") == 24


def test_parse_model_wrapper(identity_query):
    out = "sat\n(model\n  (define-fun x1 () Real (/ 3.0 4.0))\n  (define-fun y () Real (/ 3.0 4.0))\n)\n"
    w = parse_response(identity_query, out)
    assert w.x == (Fraction(3, 4),) and w.y == Fraction(3, 4)


def test_parse_model_without_wrapper(identity_query):
    out = "sat\n((define-fun y () Real 1.0)\n (define-fun x1 () Real 1.0))\n"
    assert parse_response(identity_query, out).y == 1


def test_parse_missing_variable(identity_query):
    with pytest.raises(BackendError):
        parse_response(identity_query, "sat\n(model (define-fun x1 () Real 1.0))\n")


def test_fake_solver_unsat(tmp_path, identity_query):
    assert external_solve(identity_query, fake_solver(tmp_path, "unsat\n")) is None


def test_fake_solver_unknown_is_error(tmp_path, identity_query):
    with pytest.raises(BackendError):
        external_solve(identity_query, fake_solver(tmp_path, "unknown\n"))


def test_fake_solver_bad_witness_names_constraint(tmp_path, identity_query):
    out = "sat\n(model (define-fun x1 () Real 0.7) (define-fun y () Real 0.9))\n"
    with pytest.raises(BackendError) as err:
        external_solve(identity_query, fake_solver(tmp_path, out))
    assert "y" in str(err.value)


def test_fake_solver_good_witness(tmp_path, identity_query):
    out = "sat\n(model (define-fun x1 () Real 0.7) (define-fun y () Real 0.7))\n"
    w = external_solve(identity_query, fake_solver(tmp_path, out))
    assert w.x == (Q("0.7"),)


def test_fake_solver_silent_is_error(tmp_path, identity_query):
    with pytest.raises(BackendError):
        external_solve(identity_query, fake_solver(tmp_path, ""))


def test_missing_solver_binary(identity_query):
    with pytest.raises(BackendError):
        external_solve(identity_query, "/nonexistent/solver-binary -in")


@pytest.mark.external
def test_z3_answers(z3_cmd, identity_query, hat_model, hat_domain):
    assert external_solve(identity_query, z3_cmd) is not None
    assert external_solve(candidate_query(hat_model.constraint_form, hat_domain, Q("1.2")), z3_cmd) is None


@pytest.mark.external
def test_z3_parity_with_builtin(z3_cmd):
    rng = random.Random(5)
    for k in range(50):
        n = rng.randint(1, 2)
        model, domain = random_relu(n, [rng.randint(1, 4)], seed=k)
        T = Fraction(rng.randint(-1500, 1500), 1000)
        query = candidate_query(model.constraint_form, domain, T)
        assert (solve(query) is None) == (external_solve(query, z3_cmd) is None)


def assert_same_answer(query, z3_cmd):
    ours, theirs = solve(query), external_solve(query, z3_cmd)
    assert (ours is None) == (theirs is None)
    for w in (ours, theirs):
        if w is not None:
            assert check_witness(query, w) == []


@pytest.mark.external
def test_z3_hat_lemma_queries(z3_cmd, hat_model, hat_domain, abs01):
    form, T = hat_model.constraint_form, Q("0.97")
    far = [learn_lemma(abs01, (d,), evaluate(hat_model, (d,)), 0, T) for d in (Q("-0.15"), Q("0.15"))]
    near = [learn_lemma(abs01, (d,), evaluate(hat_model, (d,)), 0, T) for d in (Q("-0.06"), Q("0.06"))]
    w = external_solve(candidate_query(form, hat_domain, T, far), z3_cmd)
    assert w is not None and abs(w.x[0]) < Q("0.05")
    assert external_solve(candidate_query(form, hat_domain, T, near), z3_cmd) is None


@pytest.mark.external
def test_z3_parity_on_counterexample_queries(z3_cmd):
    rng = random.Random(11)
    guard = Guard.absolute(Q("0.1"))
    for k in range(30):
        n = rng.randint(1, 2)
        model, domain = random_relu(n, [rng.randint(1, 4)], seed=100 + k)
        center = tuple(Fraction(rng.randint(-1000, 1000), 1000) for _ in range(n))
        T = evaluate(model, center) + Fraction(rng.randint(-100, 100), 1000)
        query = counterexample_query(model.constraint_form, domain, region_bounds(guard, center, domain), T)
        assert_same_answer(query, z3_cmd)


@pytest.mark.external
def test_z3_parity_with_lemmas(z3_cmd):
    rng = random.Random(17)
    guard = Guard.absolute(Q("0.1"))
    checked = 0
    for k in range(40):
        n = rng.randint(1, 2)
        model, domain = random_relu(n, [rng.randint(1, 4)], seed=200 + k)
        T = Fraction(rng.randint(-500, 500), 1000)
        lemmas = []
        for _ in range(20):
            d = tuple(Fraction(rng.randint(-1000, 1000), 1000) for _ in range(n))
            value = evaluate(model, d)
            if value < T:
                lemmas.append(learn_lemma(guard, d, value, Q("1/100"), T))
        if len(lemmas) < 2:
            continue
        assert_same_answer(candidate_query(model.constraint_form, domain, T, lemmas[:4]), z3_cmd)
        checked += 1
    assert checked >= 5


def test_emit_counterexample_and_lemma_sections(hat_model, hat_domain, abs01):
    form = hat_model.constraint_form
    region = region_bounds(abs01, (Q("0.5"),), hat_domain)
    script = emit_smtlib(counterexample_query(form, hat_domain, region, Q("0.8")))
    assert "; guard region\n(assert (and (<= (/ 2.0 5.0) x1) (<= x1 (/ 3.0 5.0))))" in script
    assert "(assert (< y (/ 4.0 5.0)))" in script
    lemma = learn_lemma(abs01, (Q("-0.15"),), Q("0.85"), 0, Q("0.97"))
    script = emit_smtlib(candidate_query(form, hat_domain, Q("0.97"), [lemma]))
    assert "; lemmas\n(assert (or (< x1 (- (/ 1.0 4.0))) (> x1 (- (/ 1.0 20.0)))))" in script
