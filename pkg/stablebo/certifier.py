"""GearSAT 루프의 두 질의군(후보 C_i, 반례 D_i)을 정확히 판정하는 인증기.

내장 백엔드는 보조정리 면(face) 분기와 ReLU 위상 분기를 DFS 로 탐색하고,
각 완전 할당에서 입력 x 만의 선형계획을 정확한 유리수 심플렉스로 푼다.
"""

import logging
import time
from dataclasses import dataclass, field, fields
from enum import Enum
from fractions import Fraction

from . import config
from .guard import Lemma
from .lp import LinearConstraint, lp_feasible
from .model import Box, ConstraintForm, Definition, Linear

logger = logging.getLogger(__name__)

ZERO = Fraction(0)


class CertifierCapacityError(RuntimeError):
    pass


class CertifierTimeout(TimeoutError):
    pass


class BackendError(RuntimeError):
    pass


class Sense(str, Enum):
    AT_LEAST = ">="
    BELOW = "<"


@dataclass(frozen=True)
class Query:
    constraints: ConstraintForm
    domain: Box
    threshold: Fraction
    sense: Sense
    lemmas: tuple[Lemma, ...] = ()
    region: Box | None = None

    def __post_init__(self):
        object.__setattr__(self, "threshold", Fraction(self.threshold))
        n = len(self.constraints.inputs)
        if self.domain.dim != n:
            raise ValueError(f"정의역 차원 {self.domain.dim} != 입력 수 {n}")
        if self.region is not None and self.region.dim != n:
            raise ValueError(f"영역 차원 {self.region.dim} != 입력 수 {n}")
        for m, lemma in enumerate(self.lemmas):
            if lemma.region.dim != n:
                raise ValueError(f"lemmas[{m}] 차원 {lemma.region.dim} != 입력 수 {n}")

    @property
    def search_box(self) -> Box | None:
        if self.region is None:
            return self.domain
        return self.domain.intersect(self.region)


@dataclass(frozen=True)
class Witness:
    x: tuple[Fraction, ...]
    y: Fraction
    assignment: dict = field(default_factory=dict, compare=False, repr=False)


@dataclass(frozen=True)
class CertifierConfig:
    backend: str = "builtin"
    solver_cmd: str | None = None
    relu_cap: int = config.RELU_CAP
    timeout_s: float | None = config.SOLVE_TIMEOUT_S

    def __post_init__(self):
        if self.backend not in ("builtin", "external"):
            raise ValueError(f"알 수 없는 백엔드: {self.backend!r}")
        if self.backend == "external" and not self.solver_cmd:
            raise ValueError("external 백엔드에는 solver_cmd 가 필요함")

    @classmethod
    def from_dict(cls, data: dict | None) -> "CertifierConfig":
        data = dict(data or {})
        unknown = set(data) - {f.name for f in fields(cls)}
        if unknown:
            raise ValueError(f"알 수 없는 certifier 설정 키: {sorted(unknown)}")
        return cls(**data)


@dataclass
class SearchStats:
    nodes: int = 0
    lp_calls: int = 0
    lemma_branches: int = 0
    relu_branches: int = 0
    fixed_by_intervals: int = 0
    pruned: int = 0


def candidate_query(form: ConstraintForm, domain: Box, threshold, lemmas=()) -> Query:
    """C_i(x, y) = F_i(x, y) ∧ y >= T"""
    return Query(form, domain, Fraction(threshold), Sense.AT_LEAST, tuple(lemmas))


def counterexample_query(form: ConstraintForm, domain: Box, region: Box, threshold) -> Query:
    """D_i(x', y') = θ(c_i, x') ∧ F(x', y') ∧ y' < T. 보조정리는 싣지 않음"""
    return Query(form, domain, Fraction(threshold), Sense.BELOW, (), region)


# ── x 에 대한 아핀식 (계수 튜플, 상수) ──


def _affine(form_inputs, linear: Linear, env) -> tuple[tuple[Fraction, ...], Fraction]:
    n = len(form_inputs)
    coefs = [ZERO] * n
    const = linear.const
    for var, c in linear.terms:
        a, b = env[var]
        for i in range(n):
            if a[i]:
                coefs[i] += c * a[i]
        const += c * b
    return tuple(coefs), const


def _affine_range(expr, lower, upper) -> tuple[Fraction, Fraction]:
    a, b = expr
    lo = hi = b
    for c, l, u in zip(a, lower, upper):
        if c > 0:
            lo += c * l
            hi += c * u
        elif c < 0:
            lo += c * u
            hi += c * l
    return lo, hi


def _affine_at(expr, point) -> Fraction:
    a, b = expr
    return b + sum((c * v for c, v in zip(a, point)), ZERO)


def _affine_constraint(names, expr, relation, rhs) -> LinearConstraint:
    a, b = expr
    return LinearConstraint(tuple((v, c) for v, c in zip(names, a) if c), relation, Fraction(rhs) - b)


def _output_range(form: ConstraintForm, env, start: int, lower, upper) -> tuple[Fraction, Fraction]:
    """이미 아핀식이 정해진 변수는 그 범위로, 나머지는 구간 산술로 전파한 y 의 범위"""
    ranges = {v: _affine_range(e, lower, upper) for v, e in env.items()}
    for step in form.steps[start:]:
        if isinstance(step, Definition):
            lo = hi = step.expr.const
            for var, c in step.expr.terms:
                l, u = ranges[var]
                if c > 0:
                    lo += c * l
                    hi += c * u
                else:
                    lo += c * u
                    hi += c * l
            ranges[step.var] = (lo, hi)
        else:
            l, u = ranges[step.pre]
            ranges[step.post] = (max(l, ZERO), max(u, ZERO))
    return ranges[form.output]


@dataclass
class _Node:
    lower: list
    upper: list
    lower_strict: list
    upper_strict: list
    lemma_pos: int
    step_pos: int
    env: dict
    cons: list

    def child(self) -> "_Node":
        return _Node(
            list(self.lower),
            list(self.upper),
            list(self.lower_strict),
            list(self.upper_strict),
            self.lemma_pos,
            self.step_pos,
            dict(self.env),
            list(self.cons),
        )

    def empty(self) -> bool:
        return any(
            l > u or (l == u and (ls or us))
            for l, u, ls, us in zip(self.lower, self.upper, self.lower_strict, self.upper_strict)
        )


def _lemma_satisfied(node: _Node, lemma: Lemma) -> bool:
    """상자 전체가 이미 보조정리 상자의 어느 면 바깥에 있는지"""
    for i, (lo, hi) in enumerate(zip(lemma.region.lower, lemma.region.upper)):
        u, us = node.upper[i], node.upper_strict[i]
        if u < lo or (u == lo and us):
            return True
        l, ls = node.lower[i], node.lower_strict[i]
        if l > hi or (l == hi and ls):
            return True
    return False


def _lemma_children(node: _Node, lemma: Lemma) -> list[_Node]:
    """상자 밖이라는 선언을 2n 개 면 반공간으로 나눈 자식들 (엄격)"""
    children = []
    for i, (lo, hi) in enumerate(zip(lemma.region.lower, lemma.region.upper)):
        if node.lower[i] < lo:
            c = node.child()
            c.upper[i], c.upper_strict[i] = lo, True
            c.lemma_pos += 1
            children.append(c)
        if node.upper[i] > hi:
            c = node.child()
            c.lower[i], c.lower_strict[i] = hi, True
            c.lemma_pos += 1
            children.append(c)
    return children


def _deadline(cfg: CertifierConfig, deadline: float | None) -> float | None:
    if cfg.timeout_s is None:
        return deadline
    own = time.monotonic() + cfg.timeout_s
    return own if deadline is None else min(own, deadline)


def split_search(
    query: Query,
    cfg: CertifierConfig | None = None,
    stats: SearchStats | None = None,
    deadline: float | None = None,
) -> Witness | None:
    cfg = cfg or CertifierConfig()
    stats = stats if stats is not None else SearchStats()
    form = query.constraints
    names = form.inputs
    n = len(names)
    box = query.search_box
    if box is None:
        return None
    # 가장 최근에 배운 보조정리부터 분기
    lemmas = list(reversed(query.lemmas))
    T = query.threshold
    env0 = {
        v: (tuple(Fraction(1) if k == i else ZERO for k in range(n)), ZERO) for i, v in enumerate(names)
    }
    stack = [
        _Node(list(box.lower), list(box.upper), [False] * n, [False] * n, 0, 0, env0, [])
    ]
    while stack:
        if deadline is not None and time.monotonic() >= deadline:
            raise CertifierTimeout("인증기 시간 초과")
        node = stack.pop()
        stats.nodes += 1
        if node.empty():
            stats.pruned += 1
            continue

        if node.lemma_pos < len(lemmas):
            lemma = lemmas[node.lemma_pos]
            if _lemma_satisfied(node, lemma):
                node.lemma_pos += 1
                stack.append(node)
                continue
            children = _lemma_children(node, lemma)
            stats.lemma_branches += len(children)
            stack.extend(reversed(children))
            continue

        y_lo, y_hi = _output_range(form, node.env, node.step_pos, node.lower, node.upper)
        if (query.sense is Sense.AT_LEAST and y_hi < T) or (query.sense is Sense.BELOW and y_lo >= T):
            stats.pruned += 1
            continue

        branched = False
        steps = form.steps
        while node.step_pos < len(steps):
            step = steps[node.step_pos]
            if isinstance(step, Definition):
                node.env[step.var] = _affine(names, step.expr, node.env)
                node.step_pos += 1
                continue
            pre = node.env[step.pre]
            lo, hi = _affine_range(pre, node.lower, node.upper)
            if lo >= 0:
                node.env[step.post] = pre
                stats.fixed_by_intervals += 1
            elif hi <= 0:
                node.env[step.post] = ((ZERO,) * n, ZERO)
                stats.fixed_by_intervals += 1
            else:
                active, inactive = node.child(), node.child()
                for c in (active, inactive):
                    c.step_pos += 1
                active.env[step.post] = pre
                active.cons.append(_affine_constraint(names, pre, ">=", 0))
                inactive.env[step.post] = ((ZERO,) * n, ZERO)
                inactive.cons.append(_affine_constraint(names, pre, "<=", 0))
                # 상자 중점에서의 부호와 맞는 위상을 먼저
                mid = [(l + u) / 2 for l, u in zip(node.lower, node.upper)]
                first, second = (active, inactive) if _affine_at(pre, mid) >= 0 else (inactive, active)
                stack.append(second)
                stack.append(first)
                stats.relu_branches += 1
                branched = True
                break
            node.step_pos += 1
        if branched:
            continue

        witness = _solve_leaf(query, node, stats)
        if witness is not None:
            return witness
    return None


def _solve_leaf(query: Query, node: _Node, stats: SearchStats) -> Witness | None:
    form = query.constraints
    names = form.inputs
    cons = list(node.cons)
    for v, l, u, ls, us in zip(names, node.lower, node.upper, node.lower_strict, node.upper_strict):
        cons.append(LinearConstraint(((v, Fraction(1)),), ">" if ls else ">=", l))
        cons.append(LinearConstraint(((v, Fraction(1)),), "<" if us else "<=", u))
    y_expr = node.env[form.output]
    relation = ">=" if query.sense is Sense.AT_LEAST else "<"
    cons.append(_affine_constraint(names, y_expr, relation, query.threshold))
    stats.lp_calls += 1
    values = lp_feasible(cons)
    if values is None:
        return None
    x = tuple(values.get(v, ZERO) for v in names)
    assignment = form.complete(x)
    return Witness(x=x, y=assignment[form.output], assignment=assignment)


def check_witness(query: Query, witness: Witness) -> list[str]:
    """정확한 대입으로 질의의 모든 제약을 다시 확인. 어긴 제약의 설명 목록"""
    form = query.constraints
    bad = []
    x = tuple(Fraction(v) for v in witness.x)
    if len(x) != len(form.inputs):
        return [f"입력 차원 {len(x)} != {len(form.inputs)}"]
    assignment = dict(witness.assignment) if witness.assignment else form.complete(x)
    for name, v in zip(form.inputs, x):
        if assignment.get(name) != v:
            bad.append(f"입력 {name} 값 불일치")
    missing = [v for v in form.variables if v not in assignment]
    if missing:
        return bad + [f"할당 누락: {', '.join(missing)}"]
    bad.extend(form.violations(assignment))
    y = assignment[form.output]
    if y != witness.y:
        bad.append("y 값 불일치")
    if not query.domain.contains(x):
        bad.append("정의역 경계")
    if query.region is not None and not query.region.contains(x):
        bad.append("가드 영역 θ(c, x')")
    T = query.threshold
    if query.sense is Sense.AT_LEAST and not y >= T:
        bad.append(f"임계값 y >= {T}")
    if query.sense is Sense.BELOW and not y < T:
        bad.append(f"임계값 y < {T}")
    for m, lemma in enumerate(query.lemmas):
        if lemma.excludes(x):
            bad.append(f"보조정리 {m} (반례 {[str(v) for v in lemma.counter_example]})")
    return bad


def solve(
    query: Query,
    cfg: CertifierConfig | None = None,
    stats: SearchStats | None = None,
    deadline: float | None = None,
) -> Witness | None:
    """증인 또는 None(Unsat). 내장 단편 안에서는 항상 결론을 냄"""
    cfg = cfg or CertifierConfig()
    relus = len(query.constraints.relus)
    if relus > cfg.relu_cap:
        raise CertifierCapacityError(
            f"ReLU {relus} 개가 상한 {cfg.relu_cap} 을 넘음. --backend external 사용을 고려하세요"
        )
    stats = stats if stats is not None else SearchStats()
    witness = split_search(query, cfg, stats, _deadline(cfg, deadline))
    if witness is not None:
        bad = check_witness(query, witness)
        if bad:
            raise ArithmeticError(f"내장 인증기 증인이 검증에 실패함: {bad}")
    logger.debug(
        "solve(%s %s): %s, LP %d 회, 노드 %d",
        query.sense.value,
        query.threshold,
        "sat" if witness else "unsat",
        stats.lp_calls,
        stats.nodes,
    )
    return witness


def certify(
    query: Query,
    cfg: CertifierConfig | None = None,
    stats: SearchStats | None = None,
    deadline: float | None = None,
) -> Witness | None:
    """설정된 백엔드로 질의를 판정"""
    cfg = cfg or CertifierConfig()
    if cfg.backend == "external":
        from .smtlib import external_solve

        timeout = cfg.timeout_s or config.EXTERNAL_TIMEOUT_S
        if deadline is not None:
            timeout = max(0.0, min(timeout, deadline - time.monotonic()))
        return external_solve(query, cfg.solver_cmd, timeout)
    return solve(query, cfg, stats, deadline)
