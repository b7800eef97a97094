"""실험 하네스: 문제 명세 로딩, 지표 기록, 단일 실행/2×2 행렬, 산점도 내보내기."""

import json
import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, fields, replace
from fractions import Fraction

import numpy as np
import pandas as pd

from . import config
from .bo import BoConfig, BoEngineError, run_basic
from .certifier import CertifierConfig, CertifierTimeout
from .gearsat import BudgetExceeded, SolverConfig, SolverStats, ThresholdResult, optimize, verify_lower
from .guard import Guard
from .model import Box, PwlModel, format_rational, load_model

logger = logging.getLogger(__name__)

INDICATOR_FIELDS = (
    "T",
    "N_cap", "N_can", "N_ce", "N_sa",
    "T_cap", "T_can", "T_ce", "T_sa",
    "n_cai", "n_cci", "n_cap", "n_can", "n_ce", "n_sa", "n_un",
    "t_cap", "t_can", "t_ce", "t_sa",
    "time",
)
CSV_COLUMNS = ("run",) + INDICATOR_FIELDS
SCATTER_COLUMNS = (
    "candidate",
    "counter_example",
    "euclidean",
    "chebyshev",
    "gap",
    "candidate_value",
    "counter_value",
)
TIMEOUT_MARK = "≥"
ERROR_MARK = "error"

_SPEC_KEYS = {
    "model", "domain", "guard", "epsilon", "delta", "seed", "n_init", "counterexample_seeds",
    "max_iter", "flags", "bo", "certifier", "budget_s",
}


class SpecError(ValueError):
    pass


# ── 문제 명세 ──


@dataclass
class ProblemSpec:
    model: PwlModel
    domain: Box
    guard: Guard
    solver: SolverConfig
    model_path: str | None = None


def _seconds(value, where: str) -> float:
    try:
        seconds = float(value)
    except (TypeError, ValueError):
        raise SpecError(f"{where}: 초 단위 수여야 함 ({value!r})") from None
    if seconds < 0:
        raise SpecError(f"{where}: 음수일 수 없음 ({seconds})")
    return seconds


def spec_from_dict(data: dict, base_dir: str = ".", overrides: dict | None = None) -> ProblemSpec:
    if not isinstance(data, dict):
        raise SpecError("명세 최상위는 객체여야 함")
    unknown = set(data) - _SPEC_KEYS
    if unknown:
        raise SpecError(f"알 수 없는 명세 키: {sorted(unknown)}")
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    try:
        raw_model = overrides.get("model", data.get("model"))
        if raw_model is None:
            raise KeyError("model")
        model_path = None
        if isinstance(raw_model, dict):
            model = load_model(raw_model)
        else:
            model_path = os.path.join(base_dir, raw_model)
            model = load_model(model_path)
        domain = Box.from_dict(data["domain"])
        guard = Guard.from_dict(data["guard"])
    except KeyError as e:
        raise SpecError(f"명세 필드 누락: {e.args[0]}") from None
    if domain.dim != model.input_dim:
        raise SpecError(f"정의역 차원 {domain.dim} != 모델 input_dim {model.input_dim}")
    guard.check_domain(domain)

    bo = dict(data.get("bo") or {})
    seed = data.get("seed", bo.pop("seed", 0))
    bo_config = BoConfig.from_dict(bo)
    certifier = dict(data.get("certifier") or {})
    for key, target in (("backend", "backend"), ("solver_cmd", "solver_cmd"), ("relu_cap", "relu_cap"), ("timeout_s", "timeout_s")):
        if key in overrides:
            certifier[target] = overrides[key]
    if "solver_cmd" in overrides and "backend" not in certifier:
        certifier["backend"] = "external"
    if certifier.get("timeout_s") is not None:
        certifier["timeout_s"] = _seconds(certifier["timeout_s"], "certifier.timeout_s")
    budget_s = overrides.get("budget_s", data.get("budget_s"))
    if budget_s is not None:
        budget_s = _seconds(budget_s, "budget_s")
    max_iter = dict(data.get("max_iter") or {})
    flags = dict(data.get("flags") or {})
    if set(max_iter) - {"candidates", "counterexamples"} or set(flags) - {"candidates", "counterexamples"}:
        raise SpecError("max_iter/flags 에는 candidates, counterexamples 키만 허용됨")
    solver = SolverConfig(
        delta=overrides.get("delta", data.get("delta", config.DEFAULT_DELTA)),
        epsilon=overrides.get("epsilon", data.get("epsilon", config.DEFAULT_EPSILON)),
        max_iter_candidates=max_iter.get("candidates", config.MAX_ITER_CANDIDATES),
        max_iter_counterexamples=max_iter.get("counterexamples", config.MAX_ITER_COUNTEREXAMPLES),
        use_bo_candidates=overrides.get("use_bo_candidates", flags.get("candidates", True)),
        use_bo_counterexamples=overrides.get("use_bo_counterexamples", flags.get("counterexamples", True)),
        n_init=data.get("n_init", config.N_INIT),
        counterexample_seeds=data.get("counterexample_seeds", config.COUNTEREXAMPLE_SEEDS),
        seed=int(overrides.get("seed", seed)),
        bo=bo_config,
        certifier=CertifierConfig.from_dict(certifier),
        budget_s=budget_s,
    )
    return ProblemSpec(model=model, domain=domain, guard=guard, solver=solver, model_path=model_path)


def load_spec(path: str, overrides: dict | None = None) -> ProblemSpec:
    """문제 명세 JSON 을 읽음. model 경로는 명세 파일 기준 상대 경로"""
    try:
        with open(path, encoding="utf-8") as f:
            data = json.loads(f.read(), parse_float=str)
    except json.JSONDecodeError as e:
        raise SpecError(f"{path}: JSON 형식 오류 (line {e.lineno} col {e.colno}): {e.msg}") from None
    return spec_from_dict(data, os.path.dirname(os.path.abspath(path)), overrides)


# ── 지표 ──


@dataclass
class Indicators:
    T: Fraction | None = None
    N_cap: int = 0
    N_can: int = 0
    N_ce: int = 0
    N_sa: int = 0
    T_cap: float = 0.0
    T_can: float = 0.0
    T_ce: float = 0.0
    T_sa: float = 0.0
    n_cai: int = 0
    n_cci: int = 0
    n_cap: int = 0
    n_can: int = 0
    n_ce: int = 0
    n_sa: int = 0
    n_un: int = 0
    t_cap: float = 0.0
    t_can: float = 0.0
    t_ce: float = 0.0
    t_sa: float = 0.0
    time: float = 0.0
    status: str = "ok"  # ok | timeout | error (CSV 에는 T/time 표기로만 나타남)

    @classmethod
    def from_stats(cls, T, stats: SolverStats, elapsed: float, timings: bool = True, status: str = "ok") -> "Indicators":
        values = {}
        for f in fields(cls):
            if f.name in ("T", "status", "time"):
                continue
            v = getattr(stats, f.name)
            if f.type in (float, "float"):
                v = round(v, config.TIMER_DECIMALS) if timings else 0.0
            values[f.name] = v
        elapsed = round(elapsed, config.TIMER_DECIMALS) if timings else 0.0
        return cls(T=T, time=elapsed, status=status, **values)

    def to_row(self, run: str, budget_s: float | None = None) -> dict[str, str]:
        row = {"run": run}
        for name in INDICATOR_FIELDS:
            v = getattr(self, name)
            if name == "T":
                if self.status == "error" or v is None:
                    row[name] = ERROR_MARK
                else:
                    row[name] = (TIMEOUT_MARK if self.status == "timeout" else "") + format_rational(v)
            elif name == "time" and self.status == "timeout" and budget_s is not None:
                row[name] = f">{budget_s:g}"
            elif isinstance(v, float):
                row[name] = f"{v:.{config.TIMER_DECIMALS}f}"
            else:
                row[name] = str(v)
        return row

    @classmethod
    def from_row(cls, row) -> "Indicators":
        raw_T = str(row["T"])
        if raw_T == ERROR_MARK:
            return cls(status="error")
        status = "timeout" if raw_T.startswith(TIMEOUT_MARK) else "ok"
        values = {"T": Fraction(raw_T.removeprefix(TIMEOUT_MARK)), "status": status}
        for f in fields(cls):
            if f.name in ("T", "status"):
                continue
            text = str(row[f.name])
            if f.type in (float, "float"):
                values[f.name] = float(text.lstrip(">"))
            else:
                values[f.name] = int(text)
        return cls(**values)


def _error_row(run: str) -> dict[str, str]:
    return {"run": run, **{name: "" for name in INDICATOR_FIELDS}, "T": ERROR_MARK}


def write_rows(rows: list[dict], path: str) -> pd.DataFrame:
    df = pd.DataFrame(rows, columns=list(CSV_COLUMNS))
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    df.to_csv(path, index=False)
    return df


def read_table(path: str) -> pd.DataFrame:
    return pd.read_csv(path, dtype=str, keep_default_na=False)


# ── 결과 기록 ──


def _vec(x) -> list[str] | None:
    return None if x is None else [format_rational(v) for v in x]


def result_record(
    result: ThresholdResult,
    indicators: Indicators,
    spec: ProblemSpec | None = None,
    verified: bool | None = None,
    bo_best=None,
) -> dict:
    record = {
        "T": format_rational(result.T),
        "T_float": float(result.T),
        "upper": format_rational(result.upper),
        "epsilon": format_rational(result.epsilon),
        "witness": _vec(result.witness),
        "witness_float": None if result.witness is None else [float(v) for v in result.witness],
        "iterations": result.iterations,
        "history": [{"T": format_rational(t), "outcome": o.value} for t, o in result.history],
        "lemma_count": result.lemma_count,
        "refutations": [
            {
                "candidate": _vec(r.candidate),
                "candidate_value": format_rational(r.candidate_value),
                "counter_example": _vec(r.counter_example),
                "counter_value": format_rational(r.counter_value),
                "candidate_by_bo": r.candidate_by_bo,
                "counter_by_bo": r.counter_by_bo,
            }
            for r in result.refutations
        ],
        "complete": result.complete,
        "certified": result.certified,
        "verified": verified,
        "indicators": {k: v for k, v in indicators.to_row("").items() if k != "run"},
        "bo_best": None if bo_best is None else {"x": list(bo_best.x), "y": bo_best.y},
    }
    if spec is not None:
        record["domain"] = spec.domain.to_dict()
        record["guard"] = spec.guard.to_dict()
        record["flags"] = {
            "candidates": spec.solver.use_bo_candidates,
            "counterexamples": spec.solver.use_bo_counterexamples,
        }
        record["seed"] = spec.solver.seed
    return record


def write_json(record: dict, path: str) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(record, f, ensure_ascii=False, indent=2, sort_keys=True)
        f.write("\n")


def reference_bo(spec: ProblemSpec):
    """인증 없는 기본 BO 최적값 (참고용)"""
    lower, upper = spec.domain.as_floats()
    cfg = spec.solver
    try:
        return run_basic(
            spec.model.evaluate_float,
            lower,
            upper,
            cfg.n_init,
            cfg.max_iter_candidates,
            bo_config=cfg.bo,
            seed=[cfg.seed, 7],
        )
    except (BoEngineError, np.linalg.LinAlgError) as e:
        logger.warning("참고용 BO 실패: %s", e)
        return None


def _flag_key(cfg: SolverConfig) -> str:
    return f"{int(cfg.use_bo_candidates)}:{int(cfg.use_bo_counterexamples)}"


def solve_spec(spec: ProblemSpec, timings: bool = True) -> tuple[ThresholdResult, Indicators]:
    """optimize 를 실행하고 지표를 채움. 예산 초과 시 부분 결과를 timeout 상태로 반환"""
    t0 = time.perf_counter()
    try:
        result = optimize(spec.model, spec.guard, spec.domain, spec.solver)
        status = "ok"
    except (BudgetExceeded, CertifierTimeout) as e:
        if getattr(e, "partial", None) is None:
            raise
        result, status = e.partial, "timeout"
    elapsed = time.perf_counter() - t0
    return result, Indicators.from_stats(result.T, result.stats, elapsed, timings, status)


def run_solve(
    spec: ProblemSpec,
    out: str | None = None,
    csv_path: str | None = None,
    timings: bool = True,
    with_reference: bool = True,
) -> tuple[ThresholdResult, Indicators]:
    result, indicators = solve_spec(spec, timings)
    verified = None
    if result.witness is not None and result.certified:
        try:
            verified = verify_lower(spec.model, spec.guard, spec.domain, result.T, result.witness, spec.solver.certifier)
        except CertifierTimeout:
            logger.warning("T=%s 재검증 시간 초과", result.T)
    bo_best = reference_bo(spec) if with_reference else None
    if out:
        write_json(result_record(result, indicators, spec, verified, bo_best), out)
    if csv_path:
        write_rows([indicators.to_row(f"0:{_flag_key(spec.solver)}", spec.solver.budget_s)], csv_path)
    logger.info("T = %s (≈ %.6g), 반복 %d, 재검증 %s", result.T, float(result.T), result.iterations, verified)
    if indicators.status == "timeout":
        raise BudgetExceeded("시간 예산 소진, 부분 결과를 기록함", partial=result)
    return result, indicators


# ── 2×2 실험 행렬 ──


FLAG_COMBINATIONS = ((0, 0), (0, 1), (1, 0), (1, 1))


def load_instances(directory: str) -> list[tuple[str, ProblemSpec]]:
    """디렉터리의 명세 JSON 들을 이름 순으로 읽음 (모델 파일은 건너뜀)"""
    instances = []
    for name in sorted(os.listdir(directory)):
        if not name.endswith(".json"):
            continue
        path = os.path.join(directory, name)
        with open(path, encoding="utf-8") as f:
            head = json.loads(f.read(), parse_float=str)
        if isinstance(head, dict) and "layers" in head:
            continue
        instances.append((name.removesuffix(".json"), load_spec(path)))
    if not instances:
        raise SpecError(f"{directory}: 명세 파일이 없음")
    return instances


def _matrix_job(spec: ProblemSpec, c: int, d: int, budget_s, timings: bool):
    solver = replace(spec.solver, use_bo_candidates=bool(c), use_bo_counterexamples=bool(d), budget_s=budget_s)
    return solve_spec(replace(spec, solver=solver), timings)


def run_matrix(
    instances,
    out: str | None = None,
    budget_s: float | None = config.MATRIX_BUDGET_S,
    workers: int = config.MATRIX_WORKERS,
    timings: bool = True,
) -> pd.DataFrame:
    """인스턴스마다 (c, d) ∈ {0,1}² 네 조합을 실행해 i:c:d 행의 지표 표를 만듦"""
    jobs = {}
    rows = {}
    with ThreadPoolExecutor(max_workers=max(1, workers)) as executor:
        for i, (name, spec) in enumerate(instances, start=1):
            for c, d in FLAG_COMBINATIONS:
                key = f"{i}:{c}:{d}"
                jobs[executor.submit(_matrix_job, spec, c, d, budget_s, timings)] = (key, name)
        for future in as_completed(jobs):
            key, name = jobs[future]
            try:
                _, indicators = future.result()
                rows[key] = indicators.to_row(key, budget_s)
                print(f"  {key} ({name}): T = {rows[key]['T']}")
            except Exception as e:
                logger.error("%s (%s) 실패: %s", key, name, e)
                rows[key] = _error_row(key)
    ordered = [rows[key] for key, _ in sorted(jobs.values(), key=lambda kv: tuple(int(p) for p in kv[0].split(":")))]
    df = pd.DataFrame(ordered, columns=list(CSV_COLUMNS))
    if out:
        write_rows(ordered, out)
    return df


def _bound(text: str) -> float:
    text = str(text)
    if text in ("", ERROR_MARK):
        return math.nan
    return float(Fraction(text.removeprefix(TIMEOUT_MARK)))


def _ratio(num: pd.Series, den: pd.Series) -> float:
    den_total = den.sum()
    return float(num.sum() / den_total) if den_total else math.nan


def matrix_summary(table: pd.DataFrame) -> pd.DataFrame:
    """(c, d) 조합별 요약: 반례당 BO 시도 수, 반례당 BO/인증기 시간, 최선 경계 도달 횟수"""
    df = table.copy()
    parts = df["run"].str.split(":", expand=True)
    df["instance"], df["c"], df["d"] = parts[0], parts[1], parts[2]
    df["bound"] = df["T"].map(_bound)
    ok = df[df["T"] != ERROR_MARK].copy()
    for name in INDICATOR_FIELDS[1:-1]:
        ok[name] = pd.to_numeric(ok[name])
    best = df.groupby("instance")["bound"].transform("max")
    df["is_best"] = np.isclose(df["bound"], best) & df["bound"].notna()

    summary = []
    for (c, d), group in ok.groupby(["c", "d"]):
        summary.append(
            {
                "c": c,
                "d": d,
                "runs": len(group),
                "tries_per_ce": _ratio(group["n_cci"], group["n_ce"]),
                "bo_s_per_ce": _ratio(group["t_ce"], group["n_ce"]),
                "smt_s_per_ce": _ratio(group["T_ce"], group["N_ce"]),
                "best_bound": int(df.loc[group.index, "is_best"].sum()),
            }
        )
    return pd.DataFrame(
        summary, columns=["c", "d", "runs", "tries_per_ce", "bo_s_per_ce", "smt_s_per_ce", "best_bound"]
    )


# ── 안정성 산점도 ──


def bo_only(spec: ProblemSpec, budget_s: float | None = None) -> ProblemSpec:
    """인증기를 끈 BO 전용 설정 (두 플래그 켬, MaxIter 로 제한)"""
    solver = replace(
        spec.solver,
        use_bo_candidates=True,
        use_bo_counterexamples=True,
        certify=False,
        budget_s=budget_s if budget_s is not None else spec.solver.budget_s,
    )
    return replace(spec, solver=solver)


def scatter_rows(refutations) -> list[dict]:
    """(후보, 반례) 쌍마다 거리와 값 차이. refutations 는 결과 JSON 의 항목 목록"""
    rows = []
    for r in refutations:
        c = [Fraction(v) for v in r["candidate"]]
        d = [Fraction(v) for v in r["counter_example"]]
        diff = np.array([float(a - b) for a, b in zip(c, d)])
        fc, fd = Fraction(r["candidate_value"]), Fraction(r["counter_value"])
        rows.append(
            {
                "candidate": " ".join(format_rational(v) for v in c),
                "counter_example": " ".join(format_rational(v) for v in d),
                "euclidean": float(np.linalg.norm(diff)),
                "chebyshev": float(np.max(np.abs(diff))) if diff.size else 0.0,
                "gap": float(abs(fc - fd)),
                "candidate_value": format_rational(fc),
                "counter_value": format_rational(fd),
            }
        )
    return rows


def scatter_export(record: dict, out: str | None = None) -> pd.DataFrame:
    df = pd.DataFrame(scatter_rows(record.get("refutations", [])), columns=list(SCATTER_COLUMNS))
    if out:
        os.makedirs(os.path.dirname(os.path.abspath(out)), exist_ok=True)
        df.to_csv(out, index=False)
    return df


def load_record(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise SpecError(f"{path}: JSON 형식 오류: {e.msg}") from None


def run_bo_only(spec: ProblemSpec, timings: bool = True) -> dict:
    """BO 전용 모드로 풀고 결과 기록(dict)을 돌려줌 (산점도용)"""
    result, indicators = solve_spec(bo_only(spec), timings)
    return result_record(result, indicators, spec)

