"""데스크 규모 벤치마크 인스턴스 생성기 (hat, pyramid, random_relu)."""

import logging
from fractions import Fraction

import numpy as np

from . import config
from .model import Box, Layer, PwlModel

logger = logging.getLogger(__name__)

KINDS = ("hat", "pyramid", "random_relu")


def _layer(weights, bias, activation="identity") -> Layer:
    return Layer(
        weights=tuple(tuple(Fraction(w) for w in row) for row in weights),
        bias=tuple(Fraction(b) for b in bias),
        activation=activation,
    )


def hat() -> tuple[PwlModel, Box]:
    """h(x) = 1 - ReLU(x) - ReLU(-x) = 1 - |x|, 정의역 [-1, 1]"""
    model = PwlModel(
        input_dim=1,
        layers=(
            _layer([[1], [-1]], [0, 0], "relu"),
            _layer([[-1, -1]], [1]),
        ),
    )
    return model, Box((-1,), (1,))


def pyramid() -> tuple[PwlModel, Box]:
    """f = 1 - max(|x1|, |x2|), 정의역 [-1, 1]^2

    max(a, b) = b + ReLU(a - b) 를 |x_i| = ReLU(x_i) + ReLU(-x_i) 위에 쌓은 6-ReLU 망.
    """
    model = PwlModel(
        input_dim=2,
        layers=(
            _layer([[1, 0], [-1, 0], [0, 1], [0, -1]], [0, 0, 0, 0], "relu"),
            _layer([[1, 1, -1, -1], [0, 0, 1, 1]], [0, 0], "relu"),
            _layer([[-1, -1]], [1]),
        ),
    )
    return model, Box((-1, -1), (1, 1))


def random_relu(n: int, widths, seed: int = 0) -> tuple[PwlModel, Box]:
    """은닉층 폭 widths 의 무작위 ReLU 망. 가중치는 분모 1024 의 [-1, 1] 균등 유리수"""
    widths = [int(w) for w in widths]
    if n < 1 or not widths or min(widths) < 1:
        raise ValueError(f"잘못된 random_relu 인자: n={n}, widths={widths}")
    if sum(widths) > config.RELU_CAP:
        raise ValueError(f"ReLU 총 {sum(widths)} 개가 상한 {config.RELU_CAP} 을 넘음")
    rng = np.random.default_rng([int(seed), n, *widths])
    den = config.RANDOM_WEIGHT_DENOMINATOR

    def draw(rows, cols):
        return [[Fraction(int(v), den) for v in row] for row in rng.integers(-den, den + 1, size=(rows, cols))]

    layers = []
    prev = n
    for w in widths:
        layers.append(_layer(draw(w, prev), draw(1, w)[0], "relu"))
        prev = w
    layers.append(_layer(draw(1, prev), draw(1, 1)[0]))
    model = PwlModel(input_dim=n, layers=tuple(layers))
    return model, Box((-1,) * n, (1,) * n)


def gen_instance(kind: str, n: int = 2, widths=(6,), seed: int = 0) -> tuple[PwlModel, Box]:
    if kind == "hat":
        return hat()
    if kind == "pyramid":
        return pyramid()
    if kind == "random_relu":
        return random_relu(n, widths, seed)
    raise ValueError(f"알 수 없는 인스턴스 종류: {kind!r} (가능: {', '.join(KINDS)})")
