"""가우시안 프로세스 기반 베이지안 최적화기 (Init / Suggest / Observe).

최대화기 A 와 최소화기 B 가 같은 구현을 쓰고 direction 만 다르다.
획득함수는 gp_hedge 방식으로 EI/PI/LCB 제안 중 하나를 이득의 softmax 로 고른다.
"""

import logging
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, fields
from enum import Enum

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.spatial.distance import cdist
from scipy.special import ndtr, softmax
from scipy.stats import qmc

from . import config

logger = logging.getLogger(__name__)
_SQRT_2PI = math.sqrt(2.0 * math.pi)


class BoInputError(ValueError):
    pass


class BoEngineError(RuntimeError):
    pass


class Direction(str, Enum):
    MAXIMIZE = "maximize"
    MINIMIZE = "minimize"


class AcquisitionKind(str, Enum):
    EI = "ei"
    PI = "pi"
    LCB = "lcb"


@dataclass(frozen=True)
class Sample:
    x: tuple[float, ...]
    y: float


@dataclass(frozen=True)
class BoConfig:
    kernel: str = config.KERNEL
    length_scale: float = config.LENGTH_SCALE
    signal_variance: float = config.SIGNAL_VARIANCE
    noise: float = config.NOISE_JITTER
    acq: tuple[str, ...] = config.ACQUISITIONS
    kappa: float = config.LCB_KAPPA
    hedge_eta: float = config.HEDGE_ETA
    probes: int = config.ACQ_PROBES
    refine_passes: int = config.REFINE_PASSES
    window: int = config.GP_WINDOW
    optimize_length_scale: bool = False
    normalize_y: bool = False

    def __post_init__(self):
        if self.kernel not in ("rbf", "matern52"):
            raise BoInputError(f"지원하지 않는 커널: {self.kernel!r}")
        acq = tuple(AcquisitionKind(a).value for a in self.acq)
        if not acq:
            raise BoInputError("획득함수 목록이 비어 있음")
        object.__setattr__(self, "acq", acq)
        if self.length_scale <= 0 or self.signal_variance <= 0 or self.noise <= 0:
            raise BoInputError("length_scale, signal_variance, noise 는 양수여야 함")
        if self.probes < 1 or self.window < 2:
            raise BoInputError("probes >= 1, window >= 2 이어야 함")

    @classmethod
    def from_dict(cls, data: dict | None) -> "BoConfig":
        data = dict(data or {})
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise BoInputError(f"알 수 없는 bo 설정 키: {sorted(unknown)}")
        if "acq" in data:
            data["acq"] = tuple(data["acq"])
        try:
            # 명세 JSON 의 실수는 문자열로 들어옴
            for f in fields(cls):
                if f.name in data and f.type in (float, "float"):
                    data[f.name] = float(data[f.name])
            return cls(**data)
        except (TypeError, ValueError) as e:
            raise BoInputError(str(e)) from None


def _seed_key(seed) -> list[int]:
    if seed is None:
        return [0]
    if isinstance(seed, (int, np.integer)):
        return [int(seed)]
    return [int(s) for s in seed]


def latin_hypercube(lower, upper, n: int, seed=0) -> np.ndarray:
    """[[lower, upper]] 안의 n 개 라틴 하이퍼큐브 점 (n_0 배치 휴리스틱)"""
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if n <= 0:
        return np.empty((0, lower.size))
    sampler = qmc.LatinHypercube(d=lower.size, seed=np.random.default_rng(_seed_key(seed)))
    return lower + sampler.random(n) * (upper - lower)


def acquisition_value(kind, mu, sigma, best, direction=Direction.MAXIMIZE, kappa=config.LCB_KAPPA):
    """최대화할 점수로서의 획득함수 값. 최소화 방향은 부호를 뒤집어 같은 식을 씀"""
    kind = AcquisitionKind(kind)
    direction = Direction(direction)
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma < 0):
        raise BoInputError("σ 는 음수일 수 없음")
    scalar = mu.ndim == 0 and sigma.ndim == 0
    sign = 1.0 if direction is Direction.MAXIMIZE else -1.0
    improvement = sign * (mu - best)
    if kind is AcquisitionKind.LCB:
        value = sign * mu + kappa * sigma
    else:
        positive = sigma > 0
        safe_sigma = np.where(positive, sigma, 1.0)
        z = improvement / safe_sigma
        if kind is AcquisitionKind.EI:
            value = np.where(
                positive,
                sigma * (z * ndtr(z) + np.exp(-0.5 * z * z) / _SQRT_2PI),
                np.maximum(improvement, 0.0),
            )
        else:
            value = np.where(positive, ndtr(z), (improvement > 0).astype(float))
    return float(value) if scalar else value


class GpState:
    """GP 사후분포 + 포트폴리오 상태. init → suggest/observe 로 선형적으로 전달되는 값"""

    def __init__(self, lower, upper, direction=Direction.MAXIMIZE, bo_config: BoConfig | None = None, seed=0):
        self.lower = np.asarray(lower, dtype=float)
        self.upper = np.asarray(upper, dtype=float)
        if self.lower.shape != self.upper.shape or np.any(self.lower > self.upper):
            raise BoInputError("잘못된 탐색 상자")
        width = self.upper - self.lower
        self._scale = np.where(width > 0, width, 1.0)
        self.direction = Direction(direction)
        self.config = bo_config or BoConfig()
        self.seed = _seed_key(seed)
        self.length_scale = float(self.config.length_scale)
        self.kinds = tuple(AcquisitionKind(a) for a in self.config.acq)
        self.gains = np.zeros(len(self.kinds))
        self._proposals: np.ndarray | None = None
        self._U = np.empty((0, self.lower.size))
        self._y = np.empty(0)
        self._chol: np.ndarray | None = None
        self._alpha: np.ndarray | None = None
        self._y_offset = 0.0
        self._y_scale = 1.0
        self.suggest_calls = 0
        self._observed = 0

    # ── 기본 연산 ──

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def n_samples(self) -> int:
        return self._y.size

    @property
    def samples(self) -> list[Sample]:
        X = self._denormalize(self._U)
        return [Sample(tuple(float(v) for v in x), float(y)) for x, y in zip(X, self._y)]

    @property
    def best(self) -> Sample:
        i = int(np.argmax(self._y) if self.direction is Direction.MAXIMIZE else np.argmin(self._y))
        return Sample(tuple(float(v) for v in self._denormalize(self._U[i])), float(self._y[i]))

    def _normalize(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.lower) / self._scale

    def _denormalize(self, U) -> np.ndarray:
        return np.clip(self.lower + np.asarray(U) * self._scale, self.lower, self.upper)

    def _kernel(self, A: np.ndarray, B: np.ndarray, length_scale: float | None = None) -> np.ndarray:
        ell = self.length_scale if length_scale is None else length_scale
        r = cdist(np.atleast_2d(A) / ell, np.atleast_2d(B) / ell)
        sf2 = self.config.signal_variance
        if self.config.kernel == "rbf":
            return sf2 * np.exp(-0.5 * r**2)
        s5r = math.sqrt(5.0) * r
        return sf2 * (1.0 + s5r + 5.0 / 3.0 * r**2) * np.exp(-s5r)

    def _targets(self) -> np.ndarray:
        return (self._y - self._y_offset) / self._y_scale

    def _check_point(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.size != self.dim:
            raise BoInputError(f"차원 불일치: {x.size} != {self.dim}")
        tol = 1e-9 * np.maximum(1.0, np.abs(self.upper - self.lower))
        if np.any(x < self.lower - tol) or np.any(x > self.upper + tol):
            raise BoInputError(f"점 {x.tolist()} 가 탐색 상자 밖에 있음")
        return x

    # ── 사후분포 ──

    def _refit(self) -> None:
        if self.config.normalize_y and self._y.size > 1:
            self._y_offset = float(np.mean(self._y))
            std = float(np.std(self._y))
            self._y_scale = std if std > 0 else 1.0
        else:
            self._y_offset, self._y_scale = 0.0, 1.0
        if self.config.optimize_length_scale:
            self.length_scale = max(config.LENGTH_SCALE_GRID, key=self._log_marginal_likelihood)
        K = self._kernel(self._U, self._U) + self.config.noise * np.eye(self.n_samples)
        try:
            self._chol = cholesky(K, lower=True)
        except np.linalg.LinAlgError as e:
            raise BoEngineError(f"그람 행렬 분해 실패: {e}") from e
        self._alpha = cho_solve((self._chol, True), self._targets())

    def _log_marginal_likelihood(self, length_scale: float) -> float:
        K = self._kernel(self._U, self._U, length_scale) + self.config.noise * np.eye(self.n_samples)
        try:
            L = cholesky(K, lower=True)
        except np.linalg.LinAlgError:
            return -np.inf
        t = self._targets()
        alpha = cho_solve((L, True), t)
        return float(-0.5 * t @ alpha - np.sum(np.log(np.diag(L))))

    def _append(self, u: np.ndarray, y: float) -> None:
        """촐레스키 인자를 한 행 늘리는 증분 갱신"""
        if self._chol is None or self.config.optimize_length_scale or self.config.normalize_y:
            self._U = np.vstack([self._U, u])
            self._y = np.append(self._y, y)
            self._refit()
            return
        k = self._kernel(self._U, u[None, :])[:, 0]
        l = solve_triangular(self._chol, k, lower=True)
        d2 = self.config.signal_variance + self.config.noise - float(l @ l)
        # 반올림으로 피벗이 지터 아래로 떨어지면 지터 수준으로 고정
        d = math.sqrt(max(d2, self.config.noise))
        m = self.n_samples
        L = np.zeros((m + 1, m + 1))
        L[:m, :m] = self._chol
        L[m, :m] = l
        L[m, m] = d
        self._chol = L
        self._U = np.vstack([self._U, u])
        self._y = np.append(self._y, y)
        self._alpha = cho_solve((self._chol, True), self._targets())

    def _window(self) -> None:
        if self.n_samples <= self.config.window:
            return
        best = int(np.argmax(self._y) if self.direction is Direction.MAXIMIZE else np.argmin(self._y))
        drop = 0 if best != 0 else 1
        self._U = np.delete(self._U, drop, axis=0)
        self._y = np.delete(self._y, drop)
        self._refit()

    def _posterior_normalized(self, U: np.ndarray, clamp: bool = True):
        Ks = self._kernel(U, self._U)
        mean = Ks @ self._alpha
        v = solve_triangular(self._chol, Ks.T, lower=True, check_finite=False)
        var = self.config.signal_variance - np.sum(v * v, axis=0)
        if clamp:
            var = np.maximum(var, 0.0)
        return mean * self._y_scale + self._y_offset, var * self._y_scale**2

    def posterior(self, X, clamp: bool = True) -> tuple[np.ndarray, np.ndarray]:
        """원래 좌표의 점들에서 사후 평균과 표준편차 (clamp=False 면 분산 자체를 돌려줌)"""
        U = self._normalize(np.atleast_2d(np.asarray(X, dtype=float)))
        mean, var = self._posterior_normalized(U, clamp)
        return mean, (np.sqrt(var) if clamp else var)

    def posterior_mean(self, x) -> float:
        return float(self.posterior(np.atleast_2d(x))[0][0])

    def posterior_std(self, x) -> float:
        return float(self.posterior(np.atleast_2d(x))[1][0])

    def hedge_probabilities(self) -> np.ndarray:
        return softmax(self.config.hedge_eta * self.gains)

    # ── Suggest / Observe ──

    def _score_table(self, U: np.ndarray) -> np.ndarray:
        """(획득함수 수, 점 수) 점수표. 사후분포는 한 번만 계산해 모든 획득함수가 공유"""
        mean, var = self._posterior_normalized(U)
        sigma = np.sqrt(var)
        best = float(np.max(self._y) if self.direction is Direction.MAXIMIZE else np.min(self._y))
        return np.vstack(
            [np.atleast_1d(acquisition_value(kind, mean, sigma, best, self.direction, self.config.kappa)) for kind in self.kinds]
        )

    def _refine(self, starts: np.ndarray, scores: np.ndarray) -> np.ndarray:
        """획득함수별 시작점을 좌표 탐색으로 함께 다듬음"""
        k, dim = starts.shape
        rows = np.arange(k)
        moves = np.vstack([np.eye(dim), -np.eye(dim)])
        own = np.arange(k * 2 * dim).reshape(k, 2 * dim)
        U, scores = starts.copy(), scores.copy()
        step = config.REFINE_STEP
        for _ in range(self.config.refine_passes):
            neighbors = np.clip(U[:, None, :] + step * moves[None, :, :], 0.0, 1.0)
            table = self._score_table(neighbors.reshape(-1, dim))
            values = table[rows[:, None], own]
            j = np.argmax(values, axis=1)
            better = values[rows, j] > scores
            U[better] = neighbors[rows, j][better]
            scores[better] = values[rows, j][better]
            step *= config.REFINE_SHRINK
        return U

    def _rng(self) -> np.random.Generator:
        # 관측이 없으면 같은 난수열 → 반복 호출 결정성. 창이 차도 누적 관측 수는 계속 늘어남
        return np.random.default_rng(self.seed + [self._observed])

    def suggest(self) -> np.ndarray:
        if self.n_samples == 0:
            raise BoEngineError("관측 없이 suggest 를 호출할 수 없음")
        self.suggest_calls += 1
        rng = self._rng()
        probes = rng.random((self.config.probes, self.dim))
        table = self._score_table(probes)
        first = np.argmax(table, axis=1)
        self._proposals = self._refine(probes[first], table[np.arange(len(self.kinds)), first])
        if len(self.kinds) == 1:
            idx = 0
        else:
            idx = int(rng.choice(len(self.kinds), p=self.hedge_probabilities()))
        x = self._denormalize(self._proposals[idx])
        logger.debug("suggest: %s (획득함수 %s)", np.round(x, 6).tolist(), self.kinds[idx].value)
        return x

    def observe(self, x, y) -> "GpState":
        y = float(y)
        if not math.isfinite(y):
            raise BoInputError(f"관측값이 유한하지 않음: {y}")
        u = self._normalize(self._check_point(x))
        self._append(np.clip(u, 0.0, 1.0), y)
        self._observed += 1
        self._window()
        if self._proposals is not None:
            # gp_hedge: 갱신된 사후 평균으로 각 획득함수 제안의 보상을 누적
            reward, _ = self._posterior_normalized(self._proposals)
            sign = 1.0 if self.direction is Direction.MAXIMIZE else -1.0
            self.gains = self.gains + sign * reward
            self._proposals = None
        return self


def init(lower, upper, samples: Sequence[Sample], direction=Direction.MAXIMIZE, bo_config: BoConfig | None = None, seed=0) -> GpState:
    if not samples:
        raise BoInputError("초기 표본이 비어 있음")
    state = GpState(lower, upper, direction, bo_config, seed)
    X = np.array([s.x for s in samples], dtype=float)
    y = np.array([s.y for s in samples], dtype=float)
    if not np.all(np.isfinite(y)):
        raise BoInputError("초기 표본에 유한하지 않은 값이 있음")
    for x in X:
        state._check_point(x)
    state._U = np.clip(state._normalize(X), 0.0, 1.0)
    state._y = y
    state._observed = y.size
    state._refit()
    return state


def run_basic(
    objective: Callable[[np.ndarray], float],
    lower,
    upper,
    n_init: int = config.N_INIT,
    max_iter: int = config.MAX_ITER_CANDIDATES,
    direction=Direction.MAXIMIZE,
    bo_config: BoConfig | None = None,
    seed=0,
) -> Sample:
    """기본 BO 루프: n_0 개 LHS 초기점 → MaxIter 번 suggest/observe → 최선 표본"""
    X0 = latin_hypercube(lower, upper, n_init, seed)
    samples = [Sample(tuple(x), float(objective(x))) for x in X0]
    state = init(lower, upper, samples, direction, bo_config, seed)
    for _ in range(max_iter):
        x = state.suggest()
        state.observe(x, float(objective(x)))
    return state.best
