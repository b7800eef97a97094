"""안정성 가드 θ(중심, x') 와 δ-완화 θ_δ, 그리고 반례 주위의 배제 영역(보조정리)."""

from dataclasses import dataclass
from fractions import Fraction

from .model import Box, ModelError, format_rational, parse_rational

KINDS = ("abs", "rel")


class GuardError(ValueError):
    pass


@dataclass(frozen=True)
class Guard:
    """체비셰프 상자 가드. abs: |x'_i - c_i| <= r, rel: |x'_i - c_i| <= ρ·c_i"""

    kind: str
    radius: Fraction

    def __post_init__(self):
        object.__setattr__(self, "radius", Fraction(self.radius))
        if self.kind not in KINDS:
            raise GuardError(f"알 수 없는 가드 종류: {self.kind!r}")
        if self.kind == "abs" and self.radius <= 0:
            raise GuardError(f"abs 반경은 양수여야 함: {self.radius}")
        if self.kind == "rel" and not 0 < self.radius < 1:
            raise GuardError(f"rel 비율은 0 < ρ < 1 이어야 함: {self.radius}")

    @classmethod
    def absolute(cls, radius) -> "Guard":
        return cls("abs", Fraction(radius))

    @classmethod
    def relative(cls, ratio) -> "Guard":
        return cls("rel", Fraction(ratio))

    @classmethod
    def from_dict(cls, data: dict) -> "Guard":
        if not isinstance(data, dict):
            raise GuardError("guard 는 객체여야 함")
        kind = data.get("kind")
        try:
            if kind == "abs":
                return cls.absolute(parse_rational(data["radius"], "guard.radius"))
            if kind == "rel":
                return cls.relative(parse_rational(data["ratio"], "guard.ratio"))
        except KeyError as e:
            raise GuardError(f"guard 필드 누락: {e.args[0]}") from None
        except ModelError as e:
            raise GuardError(str(e)) from None
        raise GuardError(f"알 수 없는 가드 종류: {kind!r}")

    def to_dict(self) -> dict:
        key = "radius" if self.kind == "abs" else "ratio"
        return {"kind": self.kind, key: format_rational(self.radius)}

    def check_domain(self, domain: Box) -> None:
        """rel 가드는 음이 아닌 정의역에서만 허용"""
        if self.kind == "rel" and any(a < 0 for a in domain.lower):
            raise GuardError("rel 가드는 모든 하한이 0 이상인 정의역에서만 사용할 수 있음")

    def half_widths(self, center) -> tuple[Fraction, ...]:
        if self.kind == "abs":
            return tuple(self.radius for _ in center)
        for i, c in enumerate(center):
            if c < 0:
                raise GuardError(f"rel 가드의 중심 좌표가 음수: center[{i}] = {c}")
        return tuple(self.radius * Fraction(c) for c in center)


def theta_holds(guard: Guard, center, x_prime) -> bool:
    if len(center) != len(x_prime):
        raise GuardError(f"차원 불일치: {len(center)} != {len(x_prime)}")
    widths = guard.half_widths(center)
    return all(abs(Fraction(v) - Fraction(c)) <= w for c, v, w in zip(center, x_prime, widths))


def region_bounds(guard: Guard, center, domain: Box) -> Box:
    """{x' ∈ domain : θ(center, x')}: 가드 상자를 정의역으로 자른 것"""
    widths = guard.half_widths(center)
    lower = tuple(max(Fraction(c) - w, a) for c, w, a in zip(center, widths, domain.lower))
    upper = tuple(min(Fraction(c) + w, b) for c, w, b in zip(center, widths, domain.upper))
    return Box(lower, upper)


def relax(guard: Guard, d, delta) -> Box:
    """{x : ∃z (||x - z|| <= δ ∧ θ(z, d))} 를 좌표별 구간으로 정확히 표현"""
    delta = Fraction(delta)
    if delta < 0:
        raise GuardError(f"δ 는 음수일 수 없음: {delta}")
    d = [Fraction(v) for v in d]
    if guard.kind == "abs":
        reach = guard.radius + delta
        return Box(tuple(v - reach for v in d), tuple(v + reach for v in d))
    rho = guard.radius
    if rho >= 1:
        raise GuardError(f"rel 완화는 ρ < 1 에서만 정의됨: {rho}")
    if any(v < 0 for v in d):
        raise GuardError("rel 완화는 음이 아닌 점에서만 정의됨")
    # |d - z| <= ρz  ⇔  d/(1+ρ) <= z <= d/(1-ρ)
    return Box(
        tuple(v / (1 + rho) - delta for v in d),
        tuple(v / (1 - rho) + delta for v in d),
    )


@dataclass(frozen=True)
class Lemma:
    """반례 d 주위에서 학습한 배제 ¬θ_δ(x, d). region 은 닫힌 상자 θ_δ(·, d)"""

    counter_example: tuple[Fraction, ...]
    value: Fraction
    delta: Fraction
    region: Box
    threshold: Fraction

    def excludes(self, x) -> bool:
        # 닫힌 상자 안(면 포함)이면 배제
        return self.region.contains(x)


def learn_lemma(guard: Guard, d, value, delta, threshold) -> Lemma:
    value, threshold = Fraction(value), Fraction(threshold)
    if not value < threshold:
        raise GuardError(f"반례 값 {value} 가 임계값 {threshold} 보다 작지 않음")
    d = tuple(Fraction(v) for v in d)
    return Lemma(
        counter_example=d,
        value=value,
        delta=Fraction(delta),
        region=relax(guard, d, delta),
        threshold=threshold,
    )
