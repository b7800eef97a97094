"""GearSAT_δ 판정 루프, BO 후보/반례 탐색, ε-정확 이분 탐색 드라이버."""

import logging
import time
from dataclasses import dataclass, field, fields
from enum import Enum
from fractions import Fraction

import numpy as np

from . import config
from .bo import BoConfig, BoEngineError, Direction, GpState, Sample, init, latin_hypercube
from .certifier import (
    CertifierConfig,
    CertifierTimeout,
    SearchStats,
    candidate_query,
    certify,
    counterexample_query,
)
from .guard import Guard, Lemma, learn_lemma, region_bounds
from .model import Box, PwlModel, interval_bound, parse_rational

logger = logging.getLogger(__name__)

__all__ = [
    "BudgetExceeded",
    "Outcome",
    "Refutation",
    "SolverConfig",
    "SolverStats",
    "ThresholdResult",
    "Verdict",
    "find_candidate",
    "find_counterexample",
    "gearsat_delta",
    "learn_lemma",
    "optimize",
    "verify_lower",
]

_BO_FAULTS = (BoEngineError, np.linalg.LinAlgError)


class Outcome(str, Enum):
    LOWER = "lower"
    UPPER = "upper"


@dataclass
class SolverStats:
    """지표 표의 카운터/타이머. 대문자 N/T 는 인증기, 소문자 n/t 는 BO"""

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
    lp_calls: int = 0

    def merge(self, other: "SolverStats") -> "SolverStats":
        for f in fields(self):
            setattr(self, f.name, getattr(self, f.name) + getattr(other, f.name))
        return self


@dataclass(frozen=True)
class Refutation:
    """후보 c 와 그것을 반박한 반례 d"""

    candidate: tuple[Fraction, ...]
    candidate_value: Fraction
    counter_example: tuple[Fraction, ...]
    counter_value: Fraction
    candidate_by_bo: bool
    counter_by_bo: bool


@dataclass
class Verdict:
    outcome: Outcome
    threshold: Fraction
    witness: tuple[Fraction, ...] | None = None
    lemmas: list[Lemma] = field(default_factory=list)
    refutations: list[Refutation] = field(default_factory=list)
    stats: SolverStats = field(default_factory=SolverStats)
    rounds: int = 0
    certified: bool = True


@dataclass
class ThresholdResult:
    T: Fraction
    epsilon: Fraction
    witness: tuple[Fraction, ...] | None
    iterations: int
    history: list[tuple[Fraction, Outcome]]
    upper: Fraction
    stats: SolverStats
    refutations: list[Refutation] = field(default_factory=list)
    lemma_count: int = 0
    complete: bool = True
    certified: bool = True


class BudgetExceeded(TimeoutError):
    """라운드 상한 또는 시간 예산 소진. 부분 상태를 함께 실어 보냄"""

    def __init__(self, message: str, lemmas=None, partial: ThresholdResult | None = None):
        super().__init__(message)
        self.lemmas = list(lemmas or [])
        self.partial = partial


@dataclass
class SolverConfig:
    delta: Fraction = config.DEFAULT_DELTA
    epsilon: Fraction = config.DEFAULT_EPSILON
    max_iter_candidates: int = config.MAX_ITER_CANDIDATES
    max_iter_counterexamples: int = config.MAX_ITER_COUNTEREXAMPLES
    use_bo_candidates: bool = True
    use_bo_counterexamples: bool = True
    n_init: int = config.N_INIT
    counterexample_seeds: int = config.COUNTEREXAMPLE_SEEDS
    seed: int = 0
    bo: BoConfig = field(default_factory=BoConfig)
    certifier: CertifierConfig = field(default_factory=CertifierConfig)
    certify: bool = True
    max_rounds: int = config.MAX_ROUNDS
    budget_s: float | None = None

    def __post_init__(self):
        self.delta = parse_rational(self.delta, "delta")
        self.epsilon = parse_rational(self.epsilon, "epsilon")
        if self.delta < 0:
            raise ValueError(f"δ 는 0 이상이어야 함: {self.delta}")
        if self.epsilon <= 0:
            raise ValueError(f"ε 은 양수여야 함: {self.epsilon}")
        if min(self.max_iter_candidates, self.max_iter_counterexamples) < 0:
            raise ValueError("MaxIter 는 음수일 수 없음")
        if self.n_init < 1 or self.counterexample_seeds < 1:
            raise ValueError("n_init, counterexample_seeds 는 1 이상이어야 함")
        if not self.certify and not (self.use_bo_candidates and self.use_bo_counterexamples):
            raise ValueError("인증기 없는 BO 전용 모드는 두 BO 플래그가 모두 켜져 있어야 함")


@dataclass
class Search:
    """BO 탐색 결과. point 가 None 이면 NotFoundByBO"""

    point: tuple[Fraction, ...] | None = None
    value: Fraction | None = None
    calls: int = 0
    fault: str | None = None

    @property
    def found(self) -> bool:
        return self.point is not None


def to_rational(x, box: Box) -> tuple[Fraction, ...]:
    """BO 가 낸 부동소수 점을 정확한 유리수로 바꾸고 상자 안으로 자름"""
    approx = [Fraction(float(v)).limit_denominator(config.RATIONAL_DENOMINATOR) for v in x]
    return box.clip(approx)


def _floats(x) -> np.ndarray:
    return np.array([float(v) for v in x])


def find_counterexample(
    model: PwlModel,
    guard: Guard,
    domain: Box,
    center,
    T,
    cfg: SolverConfig | None = None,
    seed=0,
) -> Search:
    """반례 탐색의 BO 부분: 가드 영역 안에서 f(d) < T 인 d 를 최소화 BO 로 찾음"""
    cfg = cfg or SolverConfig()
    T = Fraction(T)
    region = region_bounds(guard, center, domain)
    lower, upper = region.as_floats()
    seeds = [tuple(Fraction(v) for v in center)]
    if cfg.counterexample_seeds > 1:
        for x in latin_hypercube(lower, upper, cfg.counterexample_seeds - 1, seed):
            seeds.append(to_rational(x, region))
    samples = []
    for e in seeds:
        v = model.evaluate(e)
        if v < T:
            return Search(e, v)
        samples.append(Sample(tuple(float(c) for c in e), float(v)))

    result = Search()
    try:
        state = init(lower, upper, samples, Direction.MINIMIZE, cfg.bo, seed)
        for _ in range(cfg.max_iter_counterexamples):
            x = state.suggest()
            result.calls += 1
            d = to_rational(x, region)
            v = model.evaluate(d)
            if v < T:
                result.point, result.value = d, v
                return result
            state.observe(_floats(d), float(v))
    except _BO_FAULTS as e:
        logger.warning("반례 BO 엔진 오류: %s", e)
        result.fault = str(e)
    return result


def init_candidate_state(model: PwlModel, domain: Box, cfg: SolverConfig, seed=0) -> GpState:
    """후보 탐색용 최대화 BO 상태: n_init 개 LHS 점으로 초기화"""
    lower, upper = domain.as_floats()
    points = [to_rational(x, domain) for x in latin_hypercube(lower, upper, cfg.n_init, seed)]
    samples = [Sample(tuple(float(v) for v in p), float(model.evaluate(p))) for p in points]
    return init(lower, upper, samples, Direction.MAXIMIZE, cfg.bo, seed)


def _penalizing_lemma(lemmas, c) -> Lemma | None:
    for lemma in reversed(lemmas):
        if lemma.excludes(c):
            return lemma
    return None


def find_candidate(
    model: PwlModel,
    domain: Box,
    T,
    lemmas,
    state: GpState,
    prev=None,
    cfg: SolverConfig | None = None,
) -> Search:
    """보조정리 영역에 든 제안은 그 반례 값으로 벌점을 주며 f(c) >= T 인 c 를 찾음.

    prev 는 (이전 후보 c, 이전 반례 값 f(d)) 쌍이며 루프 전에 한 번 관측된다.
    """
    cfg = cfg or SolverConfig()
    T = Fraction(T)
    result = Search()
    try:
        if prev is not None:
            c_prev, value = prev
            state.observe(_floats(c_prev), float(value))
        for _ in range(cfg.max_iter_candidates):
            x = state.suggest()
            result.calls += 1
            c = to_rational(x, domain)
            lemma = _penalizing_lemma(lemmas, c)
            if lemma is None:
                z = model.evaluate(c)
                if z >= T:
                    result.point, result.value = c, z
                    return result
            else:
                z = lemma.value
            state.observe(_floats(c), float(z))
    except _BO_FAULTS as e:
        logger.warning("후보 BO 엔진 오류: %s", e)
        result.fault = str(e)
    return result


def _record_bo(stats: SolverStats, phase: str, search: Search, elapsed: float) -> None:
    if phase == "candidate":
        stats.n_cai += search.calls
        if search.fault:
            stats.n_un += 1
        elif search.found:
            stats.n_cap += 1
            stats.t_cap += elapsed
        else:
            stats.n_can += 1
            stats.t_can += elapsed
    else:
        stats.n_cci += search.calls
        if search.fault:
            stats.n_un += 1
        elif search.found:
            stats.n_ce += 1
            stats.t_ce += elapsed
        else:
            stats.n_sa += 1
            stats.t_sa += elapsed


class _Run:
    """gearsat_delta 한 번의 실행 상태"""

    def __init__(self, model, guard, domain, T, cfg, stats, deadline, seed):
        self.model = model
        self.guard = guard
        self.domain = domain
        self.T = Fraction(T)
        self.cfg = cfg
        self.stats = stats
        self.deadline = deadline
        self.seed = list(seed) if isinstance(seed, (list, tuple)) else [seed]
        self.form = model.constraint_form
        self.lemmas: list[Lemma] = []
        self.refutations: list[Refutation] = []
        self.state: GpState | None = None
        self.bo_candidates = cfg.use_bo_candidates

    def check_budget(self) -> None:
        if self.deadline is not None and time.monotonic() >= self.deadline:
            raise BudgetExceeded("시간 예산 소진", self.lemmas)

    def certify(self, query):
        search = SearchStats()
        t0 = time.perf_counter()
        try:
            witness = certify(query, self.cfg.certifier, search, self.deadline)
        except CertifierTimeout as e:
            if self.deadline is not None and time.monotonic() >= self.deadline:
                raise BudgetExceeded("시간 예산 소진", self.lemmas) from e
            e.lemmas = list(self.lemmas)
            raise
        except RuntimeError as e:
            e.lemmas = list(self.lemmas)
            raise
        finally:
            self.stats.lp_calls += search.lp_calls
        return witness, time.perf_counter() - t0

    def candidate(self, prev, rnd: int):
        """(c, f(c), BO 로 찾았는지) 또는 None(후보 없음)"""
        if self.bo_candidates:
            t0 = time.perf_counter()
            try:
                if self.state is None:
                    self.state = init_candidate_state(self.model, self.domain, self.cfg, self.seed + [0])
                    prev = None
                search = find_candidate(self.model, self.domain, self.T, self.lemmas, self.state, prev, self.cfg)
            except _BO_FAULTS as e:
                logger.warning("후보 BO 초기화 오류: %s", e)
                search = Search(fault=str(e))
            _record_bo(self.stats, "candidate", search, time.perf_counter() - t0)
            if search.fault:
                # 고장 난 상태는 버리고 이번 실행에서는 인증기만 씀
                self.bo_candidates, self.state = False, None
            if search.found:
                return search.point, search.value, True
        if not self.cfg.certify:
            return None
        witness, elapsed = self.certify(candidate_query(self.form, self.domain, self.T, self.lemmas))
        if witness is None:
            self.stats.N_can += 1
            self.stats.T_can += elapsed
            return None
        self.stats.N_cap += 1
        self.stats.T_cap += elapsed
        return witness.x, witness.y, False

    def counterexample(self, c, rnd: int):
        """(d, f(d), BO 로 찾았는지) 또는 None(안정)"""
        if self.cfg.use_bo_counterexamples:
            t0 = time.perf_counter()
            search = find_counterexample(
                self.model, self.guard, self.domain, c, self.T, self.cfg, self.seed + [1, rnd]
            )
            _record_bo(self.stats, "counterexample", search, time.perf_counter() - t0)
            if search.found:
                return search.point, search.value, True
        if not self.cfg.certify:
            return None
        region = region_bounds(self.guard, c, self.domain)
        witness, elapsed = self.certify(counterexample_query(self.form, self.domain, region, self.T))
        if witness is None:
            self.stats.N_sa += 1
            self.stats.T_sa += elapsed
            return None
        self.stats.N_ce += 1
        self.stats.T_ce += elapsed
        return witness.x, witness.y, False

    def verdict(self, outcome: Outcome, rounds: int, witness=None, certified=True) -> Verdict:
        return Verdict(
            outcome=outcome,
            threshold=self.T,
            witness=witness,
            lemmas=list(self.lemmas),
            refutations=list(self.refutations),
            stats=self.stats,
            rounds=rounds,
            certified=certified,
        )

    def run(self) -> Verdict:
        prev = None
        for rnd in range(self.cfg.max_rounds):
            self.check_budget()
            found = self.candidate(prev, rnd)
            if found is None:
                return self.verdict(Outcome.UPPER, rnd + 1, certified=self.cfg.certify)
            c, c_value, c_by_bo = found
            self.check_budget()
            refuted = self.counterexample(c, rnd)
            if refuted is None:
                return self.verdict(Outcome.LOWER, rnd + 1, witness=c, certified=self.cfg.certify)
            d, d_value, d_by_bo = refuted
            self.lemmas.append(learn_lemma(self.guard, d, d_value, self.cfg.delta, self.T))
            self.refutations.append(Refutation(c, c_value, d, d_value, c_by_bo, d_by_bo))
            logger.debug("라운드 %d: 후보 %s 를 반례 %s 가 반박", rnd, [str(v) for v in c], [str(v) for v in d])
            prev = (c, d_value)
        raise BudgetExceeded(f"라운드 상한 {self.cfg.max_rounds} 도달", self.lemmas)


def gearsat_delta(
    model: PwlModel,
    guard: Guard,
    domain: Box,
    T,
    cfg: SolverConfig | None = None,
    stats: SolverStats | None = None,
    deadline: float | None = None,
    seed=None,
) -> Verdict:
    """임계값 T 가 max-min 최적값의 하한(Lower)인지 상한(Upper)인지 판정"""
    cfg = cfg or SolverConfig()
    guard.check_domain(domain)
    if domain.dim != model.input_dim:
        raise ValueError(f"정의역 차원 {domain.dim} != input_dim {model.input_dim}")
    stats = stats if stats is not None else SolverStats()
    run = _Run(model, guard, domain, T, cfg, stats, deadline, cfg.seed if seed is None else seed)
    verdict = run.run()
    logger.info(
        "T=%s → %s (라운드 %d, 보조정리 %d)",
        verdict.threshold,
        verdict.outcome.value,
        verdict.rounds,
        len(verdict.lemmas),
    )
    return verdict


def verify_lower(
    model: PwlModel,
    guard: Guard,
    domain: Box,
    T,
    witness,
    certifier_config: CertifierConfig | None = None,
) -> bool:
    """새 인증기 질의로 Lower 판정을 사후 재검증: θ(witness, x') 안에서 f(x') < T 가 불가능해야 함"""
    if witness is None or not domain.contains(witness):
        return False
    region = region_bounds(guard, witness, domain)
    query = counterexample_query(model.constraint_form, domain, region, T)
    return certify(query, certifier_config or CertifierConfig()) is None


def optimize(model: PwlModel, guard: Guard, domain: Box, cfg: SolverConfig | None = None) -> ThresholdResult:
    """구간 경계로 초기 괄호를 잡고 ε 이하가 될 때까지 GearSAT_δ 로 이분 탐색"""
    cfg = cfg or SolverConfig()
    guard.check_domain(domain)
    deadline = time.monotonic() + cfg.budget_s if cfg.budget_s is not None else None
    lo, hi = interval_bound(model, domain)
    stats = SolverStats()
    history: list[tuple[Fraction, Outcome]] = []
    refutations: list[Refutation] = []
    witness = None
    certified = True
    lemma_count = 0

    def result(complete: bool) -> ThresholdResult:
        return ThresholdResult(
            T=lo,
            epsilon=cfg.epsilon,
            witness=witness,
            iterations=len(history),
            history=list(history),
            upper=hi,
            stats=stats,
            refutations=list(refutations),
            lemma_count=lemma_count,
            complete=complete,
            certified=certified,
        )

    def run(T) -> Verdict:
        nonlocal lemma_count, certified
        verdict = gearsat_delta(model, guard, domain, T, cfg, stats, deadline, [cfg.seed, len(history)])
        history.append((T, verdict.outcome))
        refutations.extend(verdict.refutations)
        lemma_count += len(verdict.lemmas)
        certified = certified and verdict.certified
        return verdict

    logger.info("초기 괄호 [%s, %s], ε=%s", lo, hi, cfg.epsilon)
    try:
        while hi - lo > cfg.epsilon:
            mid = (lo + hi) / 2
            verdict = run(mid)
            if verdict.outcome is Outcome.LOWER:
                lo, witness = mid, verdict.witness
            else:
                hi = mid
            logger.info("괄호 [%s, %s] (폭 %s)", lo, hi, hi - lo)
        if witness is None:
            verdict = run(lo)
            if verdict.outcome is Outcome.LOWER:
                witness = verdict.witness
    except (BudgetExceeded, CertifierTimeout) as e:
        # 질의 하나의 시간 초과도 전체 예산 초과처럼 부분 결과를 실어 보냄
        lemma_count += len(getattr(e, "lemmas", ()))
        e.partial = result(complete=False)
        raise
    return result(complete=True)
