import shutil
from fractions import Fraction

import pytest

from stablebo.guard import Guard
from stablebo.instances import hat, pyramid
from stablebo.model import Box, Layer, PwlModel


def Q(text) -> Fraction:
    return Fraction(str(text))


def dense_model(input_dim, layers) -> PwlModel:
    """[(weights, bias, activation), ...] 를 PwlModel 로"""
    return PwlModel(
        input_dim=input_dim,
        layers=tuple(
            Layer(
                weights=tuple(tuple(Fraction(w) for w in row) for row in weights),
                bias=tuple(Fraction(b) for b in bias),
                activation=act,
            )
            for weights, bias, act in layers
        ),
    )


@pytest.fixture
def hat_model():
    return hat()[0]


@pytest.fixture
def hat_domain():
    return hat()[1]


@pytest.fixture
def pyramid_instance():
    return pyramid()


@pytest.fixture
def identity_model():
    return dense_model(1, [([[1]], [0], "identity")])


@pytest.fixture
def relu_model():
    return dense_model(1, [([[1]], [0], "relu")])


@pytest.fixture
def constant_model():
    return dense_model(1, [([[0]], [5], "identity")])


@pytest.fixture
def unit_box():
    return Box((0,), (1,))


@pytest.fixture
def sym_box():
    return Box((-1,), (1,))


@pytest.fixture
def abs01():
    return Guard.absolute(Q("0.1"))


@pytest.fixture
def z3_cmd():
    path = shutil.which("z3")
    if path is None:
        pytest.skip("z3 가 PATH 에 없음")
    return f"{path} -in"
