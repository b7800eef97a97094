from fractions import Fraction

import pytest

from conftest import Q, dense_model
from stablebo.gearsat import SolverConfig, optimize
from stablebo.guard import Guard
from stablebo.instances import gen_instance, random_relu
from stablebo.model import Box
from stablebo.oracle import OracleError, grid_oracle


def test_hat_oracle(hat_model, hat_domain, abs01):
    result = grid_oracle(hat_model, abs01, hat_domain, 1e-3)
    assert result.value == pytest.approx(0.9, abs=2e-3)
    assert abs(result.argmax[0]) <= 2e-3
    assert result.error_bound == pytest.approx(2e-3)


def test_constant_oracle(constant_model, abs01):
    result = grid_oracle(constant_model, abs01, Box((3,), (7,)), 1e-2)
    assert result.value == pytest.approx(5.0)


def test_pyramid_oracle(pyramid_instance, abs01):
    model, domain = pyramid_instance
    result = grid_oracle(model, abs01, domain, 5e-3)
    assert result.value == pytest.approx(0.9, abs=1e-2)
    assert max(abs(v) for v in result.argmax) <= 1e-2


def test_rel_guard_oracle(identity_model, unit_box):
    result = grid_oracle(identity_model, Guard.relative(Q("0.1")), unit_box, 1e-3)
    assert result.value == pytest.approx(0.9, abs=2e-3)
    assert result.argmax[0] == pytest.approx(1.0)


def test_oracle_rejects_high_dimension(abs01):
    model = dense_model(4, [([[1, 1, 1, 1]], [0], "identity")])
    with pytest.raises(OracleError):
        grid_oracle(model, abs01, Box((0,) * 4, (1,) * 4), 0.5)


def test_oracle_rejects_bad_pitch(hat_model, hat_domain, abs01):
    with pytest.raises(OracleError):
        grid_oracle(hat_model, abs01, hat_domain, 0)


def test_random_instances_are_deterministic():
    a = random_relu(2, [6], seed=3)
    assert a == random_relu(2, [6], seed=3)
    assert a != random_relu(2, [6], seed=4)


def test_random_weights_on_fixed_grid():
    model, domain = random_relu(2, [4, 3], seed=9)
    assert domain == Box((-1, -1), (1, 1))
    for layer in model.layers:
        for w in [*(v for row in layer.weights for v in row), *layer.bias]:
            assert (w * 1024).denominator == 1
            assert -1 <= w <= 1


def test_gen_instance_kinds():
    assert gen_instance("hat")[0].relu_count == 2
    assert gen_instance("pyramid")[0].relu_count == 6
    assert gen_instance("random_relu", n=1, widths=(5,), seed=2)[0].relu_count == 5
    with pytest.raises(ValueError):
        gen_instance("tanh_net")
    with pytest.raises(ValueError):
        random_relu(2, [20, 20])


def _instances():
    for seed in range(20):
        n = 1 + seed % 2
        yield random_relu(n, [3] if n == 2 else [5], seed=seed), (1e-3 if n == 1 else 1e-2)


@pytest.mark.slow
def test_optimize_agrees_with_oracle():
    guard = Guard.absolute(Q("0.1"))
    eps = Q("0.01")
    for (model, domain), pitch in _instances():
        result = optimize(model, guard, domain, SolverConfig(epsilon=eps, seed=1))
        oracle = grid_oracle(model, guard, domain, pitch)
        slack = oracle.error_bound + 1e-6
        assert float(result.T) - slack <= oracle.value <= float(result.T + eps) + slack


@pytest.mark.slow
def test_flag_combinations_agree():
    guard = Guard.absolute(Q("0.1"))
    eps = Q("0.02")
    for seed in range(3):
        model, domain = random_relu(2, [4], seed=seed)
        bounds = []
        for use_c in (True, False):
            for use_d in (True, False):
                cfg = SolverConfig(epsilon=eps, use_bo_candidates=use_c, use_bo_counterexamples=use_d, seed=seed)
                bounds.append(optimize(model, guard, domain, cfg).T)
        assert max(bounds) - min(bounds) < eps
        assert all(isinstance(T, Fraction) for T in bounds)
