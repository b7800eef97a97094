"""ReLU/항등 층으로 주어진 조각별 선형 목적함수 f 의 표현, 평가, 구간 경계, 제약식 변환."""

import json
import logging
import math
import os
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property

import numpy as np

logger = logging.getLogger(__name__)

ACTIVATIONS = ("relu", "identity")


class ModelError(ValueError):
    """모델 파일/구조 오류. location 에 문제 위치(예: layers[1].weights[0])를 담음."""

    def __init__(self, message: str, location: str = ""):
        self.location = location
        super().__init__(f"{location}: {message}" if location else message)


def parse_rational(value, location: str = "") -> Fraction:
    """JSON 숫자 또는 "p/q"/십진 문자열을 정확한 유리수로 변환"""
    if isinstance(value, bool):
        raise ModelError(f"숫자가 아님: {value!r}", location)
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        if not math.isfinite(value):
            raise ModelError(f"유한하지 않은 수: {value!r}", location)
        # JSON 파서가 float 로 읽은 값은 원래 십진 표기로 되돌려 해석
        return Fraction(repr(value))
    if isinstance(value, Fraction):
        return value
    if isinstance(value, str):
        text = value.strip()
        try:
            result = Fraction(text)
        except (ValueError, ZeroDivisionError):
            raise ModelError(f"유리수로 해석할 수 없음: {value!r}", location) from None
        return result
    raise ModelError(f"숫자가 아님: {value!r}", location)


def format_rational(value: Fraction) -> str:
    return str(Fraction(value))


@dataclass(frozen=True)
class Box:
    """[[a, b]]: 좌표별 닫힌 구간의 곱"""

    lower: tuple[Fraction, ...]
    upper: tuple[Fraction, ...]

    def __post_init__(self):
        object.__setattr__(self, "lower", tuple(Fraction(v) for v in self.lower))
        object.__setattr__(self, "upper", tuple(Fraction(v) for v in self.upper))
        if len(self.lower) != len(self.upper):
            raise ModelError("하한/상한 차원이 다름", "box")
        for i, (a, b) in enumerate(zip(self.lower, self.upper)):
            if a > b:
                raise ModelError(f"하한 {a} > 상한 {b}", f"box[{i}]")

    @property
    def dim(self) -> int:
        return len(self.lower)

    def contains(self, x) -> bool:
        return all(a <= v <= b for a, v, b in zip(self.lower, x, self.upper))

    def clip(self, x) -> tuple[Fraction, ...]:
        return tuple(min(max(Fraction(v), a), b) for a, v, b in zip(self.lower, x, self.upper))

    def intersect(self, other: "Box") -> "Box | None":
        lower = tuple(max(a, c) for a, c in zip(self.lower, other.lower))
        upper = tuple(min(b, d) for b, d in zip(self.upper, other.upper))
        if any(a > b for a, b in zip(lower, upper)):
            return None
        return Box(lower, upper)

    def center(self) -> tuple[Fraction, ...]:
        return tuple((a + b) / 2 for a, b in zip(self.lower, self.upper))

    def as_floats(self) -> tuple[np.ndarray, np.ndarray]:
        return (
            np.array([float(a) for a in self.lower]),
            np.array([float(b) for b in self.upper]),
        )

    @classmethod
    def from_dict(cls, data: dict, location: str = "domain") -> "Box":
        try:
            lower = [parse_rational(v, f"{location}.lower[{i}]") for i, v in enumerate(data["lower"])]
            upper = [parse_rational(v, f"{location}.upper[{i}]") for i, v in enumerate(data["upper"])]
        except (KeyError, TypeError):
            raise ModelError("lower/upper 목록이 필요함", location) from None
        return cls(tuple(lower), tuple(upper))

    def to_dict(self) -> dict:
        return {
            "lower": [format_rational(v) for v in self.lower],
            "upper": [format_rational(v) for v in self.upper],
        }


@dataclass(frozen=True)
class Layer:
    weights: tuple[tuple[Fraction, ...], ...]
    bias: tuple[Fraction, ...]
    activation: str = "identity"

    @property
    def in_dim(self) -> int:
        return len(self.weights[0]) if self.weights else 0

    @property
    def out_dim(self) -> int:
        return len(self.weights)


@dataclass(frozen=True)
class PwlModel:
    input_dim: int
    layers: tuple[Layer, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if not isinstance(self.input_dim, int) or self.input_dim < 1:
            raise ModelError(f"input_dim 은 양의 정수여야 함: {self.input_dim!r}", "input_dim")
        if not self.layers:
            raise ModelError("층이 하나 이상 필요함", "layers")
        width = self.input_dim
        for k, layer in enumerate(self.layers):
            where = f"layers[{k}]"
            if layer.activation not in ACTIVATIONS:
                raise ModelError(f"지원하지 않는 활성화: {layer.activation!r}", f"{where}.activation")
            if not layer.weights:
                raise ModelError("weights 가 비어 있음", f"{where}.weights")
            for j, row in enumerate(layer.weights):
                if len(row) != width:
                    raise ModelError(
                        f"행 길이 {len(row)} 가 이전 층 출력 수 {width} 와 다름",
                        f"{where}.weights[{j}]",
                    )
            if len(layer.bias) != layer.out_dim:
                raise ModelError(
                    f"bias 길이 {len(layer.bias)} 가 출력 수 {layer.out_dim} 와 다름", f"{where}.bias"
                )
            width = layer.out_dim
        if width != 1:
            raise ModelError(f"마지막 층 출력은 1개여야 함 (현재 {width})", f"layers[{len(self.layers) - 1}]")

    @property
    def relu_count(self) -> int:
        return sum(layer.out_dim for layer in self.layers if layer.activation == "relu")

    # ── 부동소수 경로 (BO/오라클용) ──

    @cached_property
    def _float_layers(self) -> list[tuple[np.ndarray, np.ndarray, bool]]:
        return [
            (
                np.array([[float(w) for w in row] for row in layer.weights]),
                np.array([float(b) for b in layer.bias]),
                layer.activation == "relu",
            )
            for layer in self.layers
        ]

    @cached_property
    def constraint_form(self) -> "ConstraintForm":
        return to_constraints(self)

    def evaluate(self, x) -> Fraction:
        return evaluate(self, x)

    def evaluate_float(self, points) -> np.ndarray:
        """(m, n) 배열 또는 (n,) 벡터를 배치로 평가. 결과는 (m,) 또는 스칼라 배열"""
        pts = np.asarray(points, dtype=float)
        single = pts.ndim == 1
        h = np.atleast_2d(pts)
        if h.shape[1] != self.input_dim:
            raise ModelError(f"입력 차원 {h.shape[1]} != input_dim {self.input_dim}", "x")
        for weights, bias, relu in self._float_layers:
            h = h @ weights.T + bias
            if relu:
                h = np.maximum(h, 0.0)
        out = h[:, 0]
        return out[0] if single else out


def evaluate(model: PwlModel, x) -> Fraction:
    """정확한 유리수 순전파"""
    if len(x) != model.input_dim:
        raise ModelError(f"입력 차원 {len(x)} != input_dim {model.input_dim}", "x")
    h = [Fraction(v) for v in x]
    for layer in model.layers:
        out = []
        for row, b in zip(layer.weights, layer.bias):
            s = b
            for w, v in zip(row, h):
                if w:
                    s += w * v
            out.append(max(s, Fraction(0)) if layer.activation == "relu" else s)
        h = out
    return h[0]


def _interval_affine(layer: Layer, lo: list[Fraction], hi: list[Fraction]):
    new_lo, new_hi = [], []
    for row, b in zip(layer.weights, layer.bias):
        a, c = b, b
        for w, l, u in zip(row, lo, hi):
            if w > 0:
                a += w * l
                c += w * u
            elif w < 0:
                a += w * u
                c += w * l
        if layer.activation == "relu":
            a, c = max(a, Fraction(0)), max(c, Fraction(0))
        new_lo.append(a)
        new_hi.append(c)
    return new_lo, new_hi


def interval_bound(model: PwlModel, box: Box) -> tuple[Fraction, Fraction]:
    """층별 구간 산술로 box 위의 f 범위를 건전하게 감쌈"""
    if box.dim != model.input_dim:
        raise ModelError(f"box 차원 {box.dim} != input_dim {model.input_dim}", "box")
    lo, hi = list(box.lower), list(box.upper)
    for layer in model.layers:
        lo, hi = _interval_affine(layer, lo, hi)
    return lo[0], hi[0]


def lipschitz_bound(model: PwlModel) -> Fraction:
    """체비셰프 입력 거리 기준 립시츠 상수: 층별 무한대 노름(행 절댓값 합 최대)의 곱"""
    bound = Fraction(1)
    for layer in model.layers:
        bound *= max(sum(abs(w) for w in row) for row in layer.weights)
    return bound


# ── 제약식 형태 F(x, y) ──


@dataclass(frozen=True)
class Linear:
    """sum(coef * var) + const"""

    terms: tuple[tuple[str, Fraction], ...]
    const: Fraction = Fraction(0)

    def value(self, assignment) -> Fraction:
        return self.const + sum((c * assignment[v] for v, c in self.terms), Fraction(0))


@dataclass(frozen=True)
class Definition:
    """var = expr (expr 은 앞서 정의된 변수만 사용)"""

    var: str
    expr: Linear


@dataclass(frozen=True)
class ReluCoupling:
    """post = max(pre, 0)"""

    pre: str
    post: str


@dataclass(frozen=True)
class ConstraintForm:
    inputs: tuple[str, ...]
    output: str
    steps: tuple[Definition | ReluCoupling, ...]

    @property
    def equalities(self) -> tuple[Definition, ...]:
        return tuple(s for s in self.steps if isinstance(s, Definition))

    @property
    def relus(self) -> tuple[ReluCoupling, ...]:
        return tuple(s for s in self.steps if isinstance(s, ReluCoupling))

    @property
    def variables(self) -> tuple[str, ...]:
        names = list(self.inputs)
        for step in self.steps:
            names.append(step.var if isinstance(step, Definition) else step.post)
        return tuple(names)

    def complete(self, x) -> dict[str, Fraction]:
        """입력 x 로부터 모든 보조 변수와 y 를 결정 (유일한 만족 할당)"""
        assignment = {name: Fraction(v) for name, v in zip(self.inputs, x)}
        for step in self.steps:
            if isinstance(step, Definition):
                assignment[step.var] = step.expr.value(assignment)
            else:
                assignment[step.post] = max(assignment[step.pre], Fraction(0))
        return assignment

    def violations(self, assignment) -> list[str]:
        """할당이 어기는 등식/ReLU 결합 목록 (비어 있으면 만족)"""
        bad = []
        for step in self.steps:
            if isinstance(step, Definition):
                if assignment[step.var] != step.expr.value(assignment):
                    bad.append(f"{step.var} = 정의식")
            else:
                if assignment[step.post] != max(assignment[step.pre], Fraction(0)):
                    bad.append(f"{step.post} = max({step.pre}, 0)")
        return bad

    def satisfies(self, assignment) -> bool:
        return not self.violations(assignment)


def input_names(n: int) -> tuple[str, ...]:
    return tuple(f"x{i + 1}" for i in range(n))


def to_constraints(model: PwlModel) -> ConstraintForm:
    """층 목록을 등식 + ReLU 결합으로 낮춤. 마지막 층의 출력 변수는 y"""
    inputs = input_names(model.input_dim)
    prev = list(inputs)
    steps: list[Definition | ReluCoupling] = []
    last = len(model.layers) - 1
    for k, layer in enumerate(model.layers, start=1):
        names = []
        for j, (row, b) in enumerate(zip(layer.weights, layer.bias), start=1):
            expr = Linear(tuple((v, w) for v, w in zip(prev, row) if w), b)
            is_output = k - 1 == last
            if layer.activation == "relu":
                pre = f"p{k}_{j}"
                post = "y" if is_output else f"r{k}_{j}"
                steps.append(Definition(pre, expr))
                steps.append(ReluCoupling(pre, post))
                names.append(post)
            else:
                var = "y" if is_output else f"h{k}_{j}"
                steps.append(Definition(var, expr))
                names.append(var)
        prev = names
    return ConstraintForm(inputs=inputs, output="y", steps=tuple(steps))


# ── 파일 입출력 ──


def _parse_layer(data, k: int) -> Layer:
    where = f"layers[{k}]"
    if not isinstance(data, dict):
        raise ModelError("객체여야 함", where)
    try:
        raw_weights = data["weights"]
        raw_bias = data["bias"]
    except KeyError as e:
        raise ModelError(f"필드 누락: {e.args[0]}", where) from None
    activation = data.get("activation", "identity")
    if activation not in ACTIVATIONS:
        raise ModelError(f"지원하지 않는 활성화: {activation!r}", f"{where}.activation")
    if not isinstance(raw_weights, list) or not all(isinstance(r, list) for r in raw_weights):
        raise ModelError("weights 는 2차원 목록이어야 함", f"{where}.weights")
    if not isinstance(raw_bias, list):
        raise ModelError("bias 는 목록이어야 함", f"{where}.bias")
    weights = tuple(
        tuple(parse_rational(w, f"{where}.weights[{j}][{i}]") for i, w in enumerate(row))
        for j, row in enumerate(raw_weights)
    )
    bias = tuple(parse_rational(b, f"{where}.bias[{j}]") for j, b in enumerate(raw_bias))
    return Layer(weights=weights, bias=bias, activation=activation)


def model_from_dict(data) -> PwlModel:
    if not isinstance(data, dict):
        raise ModelError("최상위는 객체여야 함", "$")
    if "input_dim" not in data or "layers" not in data:
        raise ModelError("input_dim 과 layers 가 필요함", "$")
    if not isinstance(data["layers"], list):
        raise ModelError("layers 는 목록이어야 함", "layers")
    layers = tuple(_parse_layer(layer, k) for k, layer in enumerate(data["layers"]))
    return PwlModel(input_dim=data["input_dim"], layers=layers)


def load_model(source) -> PwlModel:
    """파일 경로 또는 JSON 텍스트에서 모델을 읽음"""
    if isinstance(source, dict):
        return model_from_dict(source)
    text = str(source)
    if isinstance(source, os.PathLike) or (not text.lstrip().startswith("{") and os.path.exists(text)):
        with open(text, encoding="utf-8") as f:
            text = f.read()
    try:
        # 정확성을 위해 소수 리터럴은 문자열 그대로 받음
        data = json.loads(text, parse_float=str, parse_constant=_reject_constant)
    except json.JSONDecodeError as e:
        raise ModelError(f"JSON 형식 오류: {e.msg}", f"line {e.lineno} col {e.colno}") from None
    model = model_from_dict(data)
    logger.debug("모델 로드: input_dim=%d, layers=%d, relu=%d", model.input_dim, len(model.layers), model.relu_count)
    return model


def _reject_constant(name: str):
    raise ModelError(f"유한하지 않은 수: {name}", "$")


def dump_model(model: PwlModel) -> dict:
    return {
        "input_dim": model.input_dim,
        "layers": [
            {
                "weights": [[format_rational(w) for w in row] for row in layer.weights],
                "bias": [format_rational(b) for b in layer.bias],
                "activation": layer.activation,
            }
            for layer in model.layers
        ],
    }


def save_model(model: PwlModel, path: str) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(dump_model(model), f, indent=2)
        f.write("\n")
