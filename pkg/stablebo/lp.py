"""정확한 유리수 심플렉스 (2단계, Bland 규칙). 인증기의 선형계획 가능성 판정용."""

import logging
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from fractions import Fraction

logger = logging.getLogger(__name__)

RELATIONS = ("<=", ">=", "==", "<", ">")
_SLACK = "__s"
ZERO = Fraction(0)


@dataclass(frozen=True)
class LinearConstraint:
    """sum(coef * var) <relation> rhs"""

    coeffs: tuple[tuple[str, Fraction], ...]
    relation: str
    rhs: Fraction

    def __post_init__(self):
        if self.relation not in RELATIONS:
            raise ValueError(f"알 수 없는 관계: {self.relation!r}")

    @classmethod
    def of(cls, coeffs: Mapping[str, Fraction], relation: str, rhs) -> "LinearConstraint":
        return cls(tuple((v, Fraction(c)) for v, c in coeffs.items() if c), relation, Fraction(rhs))

    @property
    def strict(self) -> bool:
        return self.relation in ("<", ">")

    def lhs(self, values: Mapping[str, Fraction]) -> Fraction:
        return sum((c * values.get(v, ZERO) for v, c in self.coeffs), ZERO)

    def holds(self, values: Mapping[str, Fraction]) -> bool:
        a, b = self.lhs(values), self.rhs
        return {
            "<=": a <= b,
            ">=": a >= b,
            "==": a == b,
            "<": a < b,
            ">": a > b,
        }[self.relation]


class _Tableau:
    """모든 열이 0 이상인 A z = b (b >= 0) 형태의 사전(tableau)"""

    def __init__(self, rows: list[list[Fraction]], rhs: list[Fraction], n_cols: int):
        self.rows = rows
        self.rhs = rhs
        self.n_cols = n_cols
        self.basis: list[int] = []
        self.cost: list[Fraction] = []
        self.value = ZERO

    def pivot(self, r: int, j: int) -> None:
        row = self.rows[r]
        p = row[j]
        if p != 1:
            self.rows[r] = row = [v / p for v in row]
            self.rhs[r] /= p
        for i, other in enumerate(self.rows):
            if i == r:
                continue
            f = other[j]
            if f:
                self.rows[i] = [a - f * b if b else a for a, b in zip(other, row)]
                self.rhs[i] -= f * self.rhs[r]
        f = self.cost[j]
        if f:
            self.cost = [a - f * b if b else a for a, b in zip(self.cost, row)]
            self.value += f * self.rhs[r]
        self.basis[r] = j

    def set_objective(self, c: list[Fraction]) -> None:
        """최대화 목적 c 에 대한 축소 비용 행을 현재 기저로부터 계산"""
        cost = list(c)
        value = ZERO
        for r, j in enumerate(self.basis):
            cb = c[j]
            if cb:
                cost = [a - cb * b for a, b in zip(cost, self.rows[r])]
                value += cb * self.rhs[r]
        self.cost = cost
        self.value = value

    def optimize(self, allowed: int) -> str:
        """Bland 규칙 최대화. allowed 보다 작은 열만 진입 가능"""
        while True:
            entering = next((j for j in range(allowed) if self.cost[j] > 0), None)
            if entering is None:
                return "optimal"
            best = None
            for r, row in enumerate(self.rows):
                a = row[entering]
                if a > 0:
                    key = (self.rhs[r] / a, self.basis[r])
                    if best is None or key < best[0]:
                        best = (key, r)
            if best is None:
                return "unbounded"
            self.pivot(best[1], entering)


def _solve(constraints: Sequence[LinearConstraint], objective: Mapping[str, Fraction] | None):
    """자유 변수 LP. (상태, 변수값) 반환. 상태는 optimal/infeasible/unbounded"""
    names: list[str] = []
    index: dict[str, int] = {}
    for con in constraints:
        for v, _ in con.coeffs:
            if v not in index:
                index[v] = len(names)
                names.append(v)
    for v in objective or {}:
        if v not in index:
            index[v] = len(names)
            names.append(v)
    n_vars = len(names)
    n_slack = sum(1 for c in constraints if c.relation != "==")
    n_struct = 2 * n_vars + n_slack
    m = len(constraints)
    n_cols = n_struct + m  # 인공 변수 포함

    rows, rhs = [], []
    s = 2 * n_vars
    for i, con in enumerate(constraints):
        row = [ZERO] * n_cols
        for v, c in con.coeffs:
            k = index[v]
            row[2 * k] += c
            row[2 * k + 1] -= c
        if con.relation in ("<=", "<"):
            row[s] = Fraction(1)
            s += 1
        elif con.relation in (">=", ">"):
            row[s] = Fraction(-1)
            s += 1
        b = con.rhs
        if b < 0:
            row = [-v for v in row]
            b = -b
        row[n_struct + i] = Fraction(1)
        rows.append(row)
        rhs.append(b)

    tab = _Tableau(rows, rhs, n_cols)
    tab.basis = [n_struct + i for i in range(m)]
    # 1단계: 인공 변수 합 최소화
    tab.set_objective([ZERO] * n_struct + [Fraction(-1)] * m)
    tab.optimize(n_struct)
    if tab.value < 0:
        return "infeasible", {}
    # 기저에 남은 인공 변수 내보내기 (불가능하면 중복 행이므로 제거)
    r = 0
    while r < len(tab.rows):
        if tab.basis[r] >= n_struct:
            j = next((j for j in range(n_struct) if tab.rows[r][j] != 0), None)
            if j is None:
                del tab.rows[r], tab.rhs[r], tab.basis[r]
                continue
            tab.pivot(r, j)
        r += 1
    status = "optimal"
    if objective:
        c = [ZERO] * n_cols
        for v, coef in objective.items():
            k = index[v]
            c[2 * k] += Fraction(coef)
            c[2 * k + 1] -= Fraction(coef)
        tab.set_objective(c)
        status = tab.optimize(n_struct)
    z = [ZERO] * n_cols
    for r, j in enumerate(tab.basis):
        z[j] = tab.rhs[r]
    values = {v: z[2 * k] - z[2 * k + 1] for v, k in index.items()}
    return status, values


def lp_feasible(constraints: Sequence[LinearConstraint]) -> dict[str, Fraction] | None:
    """정확한 가능성 판정. 엄격 부등식은 공유 여유변수 s 를 최대화해 처리 (s <= 1 로 상한)"""
    strict = [c for c in constraints if c.strict]
    if not strict:
        status, values = _solve(constraints, None)
        return None if status == "infeasible" else values

    relaxed = []
    for con in constraints:
        if con.relation == ">":
            relaxed.append(LinearConstraint(con.coeffs + ((_SLACK, Fraction(-1)),), ">=", con.rhs))
        elif con.relation == "<":
            relaxed.append(LinearConstraint(con.coeffs + ((_SLACK, Fraction(1)),), "<=", con.rhs))
        else:
            relaxed.append(con)
    relaxed.append(LinearConstraint(((_SLACK, Fraction(1)),), "<=", Fraction(1)))
    status, values = _solve(relaxed, {_SLACK: Fraction(1)})
    if status == "infeasible":
        return None
    s_star = values[_SLACK]
    if s_star <= 0:
        return None
    # 최적 여유의 절반 지점에서 내부 증인을 다시 구함
    fixed = relaxed + [LinearConstraint(((_SLACK, Fraction(1)),), "==", s_star / 2)]
    status, values = _solve(fixed, None)
    if status == "infeasible":
        raise ArithmeticError("여유 고정 후 LP 가 불가능해짐")
    values.pop(_SLACK, None)
    logger.debug("엄격 LP: s* = %s", s_star)
    return values
