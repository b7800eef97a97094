"""SMT-LIB2(QF_LRA) 내보내기와 외부 솔버 프로세스 백엔드."""

import logging
import re
import shlex
import subprocess
from fractions import Fraction

from . import config
from .certifier import BackendError, CertifierTimeout, Query, Sense, Witness, check_witness
from .model import Box, Definition, Linear

logger = logging.getLogger(__name__)


def _num(q) -> str:
    q = Fraction(q)
    if q < 0:
        return f"(- {_num(-q)})"
    if q.denominator == 1:
        return f"{q.numerator}.0"
    return f"(/ {q.numerator}.0 {q.denominator}.0)"


def _term(linear: Linear) -> str:
    parts = []
    for var, c in linear.terms:
        parts.append(var if c == 1 else f"(* {_num(c)} {var})")
    if linear.const or not parts:
        parts.append(_num(linear.const))
    return parts[0] if len(parts) == 1 else f"(+ {' '.join(parts)})"


def _box_asserts(names, box: Box, comment: str) -> list[str]:
    lines = [f"; {comment}"]
    for v, a, b in zip(names, box.lower, box.upper):
        lines.append(f"(assert (and (<= {_num(a)} {v}) (<= {v} {_num(b)})))")
    return lines


def emit_smtlib(query: Query) -> str:
    """질의를 결정적인 SMT-LIB2 스크립트로 변환 (ReLU 는 ite 없는 선언적 인코딩)"""
    form = query.constraints
    names = form.inputs
    lines = [
        "; stablebo query",
        f"(set-logic {config.SMT_LOGIC})",
        "(set-option :produce-models true)",
    ]
    for v in form.variables:
        lines.append(f"(declare-fun {v} () Real)")
    lines += _box_asserts(names, query.domain, "domain")
    if query.region is not None:
        lines += _box_asserts(names, query.region, "guard region")
    lines.append("; model")
    for step in form.steps:
        if isinstance(step, Definition):
            lines.append(f"(assert (= {step.var} {_term(step.expr)}))")
        else:
            post, pre = step.post, step.pre
            lines.append(f"(assert (>= {post} 0.0))")
            lines.append(f"(assert (>= {post} {pre}))")
            lines.append(f"(assert (or (= {post} 0.0) (= {post} {pre})))")
    op = ">=" if query.sense is Sense.AT_LEAST else "<"
    lines.append("; threshold")
    lines.append(f"(assert ({op} {form.output} {_num(query.threshold)}))")
    if query.lemmas:
        lines.append("; lemmas")
    for lemma in query.lemmas:
        faces = []
        for v, a, b in zip(names, lemma.region.lower, lemma.region.upper):
            faces.append(f"(< {v} {_num(a)})")
            faces.append(f"(> {v} {_num(b)})")
        lines.append(f"(assert (or {' '.join(faces)}))")
    lines += ["(check-sat)", "(get-model)", ""]
    return "\n".join(lines)


# ── 모델 출력 파싱 ──

_TOKEN = re.compile(r"\(|\)|\|[^|]*\||\"(?:[^\"]|\"\")*\"|[^\s()]+")


def _parse_sexprs(text: str) -> list:
    stack: list[list] = [[]]
    for tok in _TOKEN.findall(text):
        if tok == "(":
            stack.append([])
        elif tok == ")":
            if len(stack) == 1:
                raise BackendError("모델 출력의 괄호가 맞지 않음")
            done = stack.pop()
            stack[-1].append(done)
        else:
            stack[-1].append(tok.strip("|"))
    if len(stack) != 1:
        raise BackendError("모델 출력의 괄호가 닫히지 않음")
    return stack[0]


def _value(expr) -> Fraction:
    if isinstance(expr, str):
        try:
            return Fraction(expr)
        except ValueError:
            raise BackendError(f"수로 해석할 수 없는 값: {expr!r}") from None
    if len(expr) == 2 and expr[0] == "-":
        return -_value(expr[1])
    if len(expr) == 3 and expr[0] == "/":
        return _value(expr[1]) / _value(expr[2])
    raise BackendError(f"지원하지 않는 모델 값: {expr!r}")


def _definitions(tree) -> dict[str, Fraction]:
    values = {}

    def walk(node):
        if not isinstance(node, list):
            return
        if len(node) == 5 and node[0] == "define-fun" and node[2] == []:
            values[node[1]] = _value(node[4])
            return
        for child in node:
            walk(child)

    walk(tree)
    return values


def parse_response(query: Query, output: str) -> Witness | None:
    lines = [l.strip() for l in output.splitlines() if l.strip()]
    if not lines:
        raise BackendError("외부 솔버 출력이 비어 있음")
    answer, rest = lines[0], "\n".join(lines[1:])
    if answer == "unsat":
        return None
    if answer != "sat":
        raise BackendError(f"외부 솔버 응답: {answer}")
    values = _definitions(_parse_sexprs(rest))
    form = query.constraints
    missing = [v for v in form.variables if v not in values]
    if missing:
        raise BackendError(f"모델에 변수 누락: {', '.join(missing)}")
    assignment = {v: values[v] for v in form.variables}
    witness = Witness(
        x=tuple(assignment[v] for v in form.inputs),
        y=assignment[form.output],
        assignment=assignment,
    )
    bad = check_witness(query, witness)
    if bad:
        raise BackendError(f"외부 솔버 증인이 재검증에 실패함: {'; '.join(bad)}")
    return witness


def external_solve(query: Query, solver_cmd: str, timeout: float | None = config.EXTERNAL_TIMEOUT_S) -> Witness | None:
    script = emit_smtlib(query)
    try:
        proc = subprocess.run(
            shlex.split(solver_cmd),
            input=script,
            capture_output=True,
            text=True,
            timeout=timeout,
        )
    except subprocess.TimeoutExpired:
        raise CertifierTimeout(f"외부 솔버 시간 초과 ({timeout}s)") from None
    except OSError as e:
        raise BackendError(f"외부 솔버 실행 실패: {e}") from e
    logger.debug("외부 솔버 종료 코드 %d", proc.returncode)
    if not proc.stdout.strip():
        raise BackendError(f"외부 솔버 출력 없음 (종료 코드 {proc.returncode}): {proc.stderr.strip()[:200]}")
    return parse_response(query, proc.stdout)
