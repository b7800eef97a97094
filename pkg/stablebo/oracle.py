"""max-min 문제의 독립적인 격자 전수 탐색 오라클 (저차원 전용)."""

import logging
import math
from typing import NamedTuple

import numpy as np
from scipy.ndimage import minimum_filter1d

from . import config
from .guard import Guard
from .model import Box, PwlModel, lipschitz_bound

logger = logging.getLogger(__name__)


class OracleError(ValueError):
    pass


class OracleResult(NamedTuple):
    value: float
    argmax: tuple[float, ...]
    error_bound: float


def _axis_grid(a, b, pitch: float) -> np.ndarray:
    a, b = float(a), float(b)
    m = int(math.ceil((b - a) / pitch - 1e-9)) + 1 if b > a else 1
    return np.linspace(a, b, m)


def _rel_window_min(values: np.ndarray, grid: np.ndarray, rho: float, axis: int) -> np.ndarray:
    """축 방향으로 |x' - c| <= ρc 구간의 최솟값 (c 는 해당 격자 좌표)"""
    out = np.empty_like(values)
    moved = np.moveaxis(values, axis, 0)
    target = np.moveaxis(out, axis, 0)
    eps = 1e-12
    for j, c in enumerate(grid):
        lo = np.searchsorted(grid, c - rho * c - eps, side="left")
        hi = np.searchsorted(grid, c + rho * c + eps, side="right")
        target[j] = moved[lo:hi].min(axis=0)
    return out


def grid_oracle(model: PwlModel, guard: Guard, domain: Box, pitch: float) -> OracleResult:
    """g(x) = min_{x' ∈ θ(x)} f(x') 를 격자 위에서 계산하고 최대화. 오차 한계는 L·간격"""
    if pitch <= 0:
        raise OracleError(f"간격은 양수여야 함: {pitch}")
    if domain.dim > config.ORACLE_MAX_DIM:
        raise OracleError(f"차원 {domain.dim} 은 오라클 상한 {config.ORACLE_MAX_DIM} 을 넘음")
    guard.check_domain(domain)
    grids = [_axis_grid(a, b, pitch) for a, b in zip(domain.lower, domain.upper)]
    total = math.prod(len(g) for g in grids)
    if total > config.ORACLE_MAX_POINTS:
        raise OracleError(f"격자 점 {total} 개가 상한 {config.ORACLE_MAX_POINTS} 을 넘음")

    mesh = np.meshgrid(*grids, indexing="ij")
    points = np.stack([m.ravel() for m in mesh], axis=1)
    g = model.evaluate_float(points).reshape(mesh[0].shape)

    for axis, grid in enumerate(grids):
        if len(grid) < 2:
            continue
        if guard.kind == "abs":
            step = grid[1] - grid[0]
            k = int(math.floor(float(guard.radius) / step + 1e-9))
            if k > 0:
                g = minimum_filter1d(g, size=2 * k + 1, axis=axis, mode="nearest")
        else:
            g = _rel_window_min(g, grid, float(guard.radius), axis)

    idx = np.unravel_index(int(np.argmax(g)), g.shape)
    argmax = tuple(float(grid[i]) for grid, i in zip(grids, idx))
    spacing = max((grid[1] - grid[0] for grid in grids if len(grid) > 1), default=0.0)
    error = float(lipschitz_bound(model)) * float(spacing)
    logger.debug("격자 오라클: %d 점, 간격 %g, 최댓값 %g", total, spacing, g[idx])
    return OracleResult(float(g[idx]), argmax, error)
