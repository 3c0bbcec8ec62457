#!/usr/bin/env python3
"""
ODE Integration

Initial-value-problem integration for the thermal and HTO simulators.

Two explicit methods are available: classic fixed-step RK4 and the
Dormand-Prince 5(4) embedded pair with step-size control. Both provide
dense output between accepted steps so that results can be sampled on an
arbitrary output grid without shortening the steps.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from scripts.errors import IntegrationError

RhsFunction = Callable[[float, np.ndarray], np.ndarray]

METHODS = ('rk4_fixed', 'rk45_adaptive')

# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0])
_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84])
# difference between the 5th and the embedded 4th order weights (7 stages, FSAL)
_E = np.array([-71 / 57600, 0.0, 71 / 16695, -71 / 1920, 17253 / 339200, -22 / 525, 1 / 40])
# 4th order continuous extension, y(t + th*h) = y + h * K^T P [th, th^2, th^3, th^4]
_P = np.array([
    [1.0, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0.0, 0.0, 0.0, 0.0],
    [0.0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0.0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0.0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0.0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 5.0


@dataclass(frozen=True)
class OdeProblem:
    """dy/dt = rhs(t, y) on ``t_span`` with y(t_span[0]) = y0."""

    dimension: int
    rhs: RhsFunction
    t_span: Tuple[float, float]
    y0: np.ndarray

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError(f"dimension must be >= 1, got {self.dimension}")
        t0, t_end = self.t_span
        if not t_end > t0:
            raise ValueError(f"t_span must satisfy t_end > t0, got {self.t_span}")
        if len(self.y0) != self.dimension:
            raise ValueError(f"y0 has length {len(self.y0)}, expected {self.dimension}")


@dataclass(frozen=True)
class IntegratorConfig:
    method: str = 'rk45_adaptive'
    rel_tol: float = 1e-6
    abs_tol: float = 1e-9
    initial_step: Optional[float] = None
    max_steps: int = 1_000_000
    max_step: float = math.inf

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got '{self.method}'")
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("tolerances must be > 0")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.initial_step is not None and not self.initial_step > 0:
            raise ValueError("initial_step must be > 0")
        if not self.max_step > 0:
            raise ValueError("max_step must be > 0")


def _evaluate(rhs: RhsFunction, t: float, y: np.ndarray) -> np.ndarray:
    dy = np.asarray(rhs(t, y), dtype=float)
    if not np.all(np.isfinite(dy)):
        raise IntegrationError("non-finite derivative", t)
    return dy


def _rms(x: np.ndarray) -> float:
    return float(np.sqrt(np.mean(x * x)))


def _check_grid(grid: np.ndarray, t0: float, t_end: float) -> None:
    if grid.ndim != 1 or len(grid) == 0:
        raise ValueError("output grid must be a non-empty 1-D sequence")
    if np.any(np.diff(grid) < 0):
        raise ValueError("output grid must be sorted")
    tol = 1e-12 * max(1.0, abs(t0), abs(t_end))
    if grid[0] < t0 - tol or grid[-1] > t_end + tol:
        raise ValueError(f"output grid [{grid[0]}, {grid[-1]}] outside t_span [{t0}, {t_end}]")


def _initial_step(rhs: RhsFunction, t0: float, y0: np.ndarray, f0: np.ndarray,
                  cfg: IntegratorConfig) -> float:
    """Starting step from the Hairer-Norsett-Wanner heuristic."""
    scale = cfg.abs_tol + np.abs(y0) * cfg.rel_tol
    d0 = _rms(y0 / scale)
    d1 = _rms(f0 / scale)
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    f1 = _evaluate(rhs, t0 + h0, y0 + h0 * f0)
    d2 = _rms((f1 - f0) / scale) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1)


def _integrate_rk45(problem: OdeProblem, cfg: IntegratorConfig, grid: np.ndarray) -> np.ndarray:
    rhs = problem.rhs
    t0, t_end = (float(v) for v in problem.t_span)
    y = np.array(problem.y0, dtype=float)
    f = _evaluate(rhs, t0, y)
    out = np.empty((len(grid), problem.dimension))
    idx = 0
    while idx < len(grid) and grid[idx] <= t0:
        out[idx] = y
        idx += 1

    h = cfg.initial_step if cfg.initial_step is not None else _initial_step(rhs, t0, y, f, cfg)
    h = min(h, cfg.max_step, t_end - t0)
    K = np.empty((7, problem.dimension))
    t = t0
    attempts = 0
    rejected = False

    while t < t_end:
        if attempts >= cfg.max_steps:
            raise IntegrationError(f"maximum number of steps ({cfg.max_steps}) exceeded", t)
        attempts += 1
        if t_end - t <= 10 * np.spacing(abs(t_end)):
            break
        if h < 10 * np.spacing(max(abs(t), abs(t_end))):
            raise IntegrationError("step size underflow", t)

        last = t + h >= t_end
        if last:
            h = t_end - t
        t_new = t_end if last else t + h

        K[0] = f
        for s in range(1, 6):
            K[s] = _evaluate(rhs, t + _C[s] * h, y + h * (_A[s] @ K[:s]))
        y_new = y + h * (_B @ K[:6])
        K[6] = _evaluate(rhs, t_new, y_new)

        scale = cfg.abs_tol + np.maximum(np.abs(y), np.abs(y_new)) * cfg.rel_tol
        err_norm = _rms(h * (_E @ K) / scale)

        if err_norm <= 1.0:
            n_out = np.searchsorted(grid, t_new, side='right')
            if n_out > idx:
                theta = (grid[idx:n_out] - t) / h
                powers = np.cumprod(np.repeat(theta[:, None], 4, axis=1), axis=1)
                Q = K.T @ _P
                out[idx:n_out] = y + h * (powers @ Q.T)
                # exact end point instead of the interpolant
                out[idx:n_out][grid[idx:n_out] >= t_new] = y_new
                idx = n_out

            if err_norm == 0.0:
                factor = MAX_FACTOR
            else:
                factor = min(MAX_FACTOR, max(MIN_FACTOR, SAFETY * err_norm ** -0.2))
            if rejected:
                factor = min(1.0, factor)
            t, y, f = t_new, y_new, K[6].copy()
            h = min(h * factor, cfg.max_step)
            rejected = False
        else:
            factor = MIN_FACTOR if not np.isfinite(err_norm) else max(MIN_FACTOR, SAFETY * err_norm ** -0.2)
            h *= factor
            rejected = True

    out[idx:] = y
    logging.debug(f"rk45 integration on [{t0}, {t_end}] finished after {attempts} step attempts")
    return out


def _integrate_rk4(problem: OdeProblem, cfg: IntegratorConfig, grid: np.ndarray) -> np.ndarray:
    rhs = problem.rhs
    t0, t_end = (float(v) for v in problem.t_span)
    span = t_end - t0
    nominal = cfg.initial_step if cfg.initial_step is not None else span / 100
    n_steps = max(1, math.ceil(span / min(nominal, cfg.max_step) - 1e-9))
    if n_steps > cfg.max_steps:
        raise IntegrationError(f"fixed step needs {n_steps} steps, maximum is {cfg.max_steps}", t0)
    h = span / n_steps

    y = np.array(problem.y0, dtype=float)
    f = _evaluate(rhs, t0, y)
    out = np.empty((len(grid), problem.dimension))
    idx = 0
    while idx < len(grid) and grid[idx] <= t0:
        out[idx] = y
        idx += 1

    for k in range(n_steps):
        t = t0 + k * h
        t_new = t_end if k == n_steps - 1 else t0 + (k + 1) * h
        k1 = f
        k2 = _evaluate(rhs, t + h / 2, y + h / 2 * k1)
        k3 = _evaluate(rhs, t + h / 2, y + h / 2 * k2)
        k4 = _evaluate(rhs, t + h, y + h * k3)
        y_new = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        f_new = _evaluate(rhs, t_new, y_new)

        n_out = np.searchsorted(grid, t_new, side='right')
        if n_out > idx:
            # cubic Hermite between the step end points
            th = ((grid[idx:n_out] - t) / h)[:, None]
            h00 = 2 * th ** 3 - 3 * th ** 2 + 1
            h10 = th ** 3 - 2 * th ** 2 + th
            h01 = -2 * th ** 3 + 3 * th ** 2
            h11 = th ** 3 - th ** 2
            out[idx:n_out] = h00 * y + h10 * h * f + h01 * y_new + h11 * h * f_new
            out[idx:n_out][grid[idx:n_out] >= t_new] = y_new
            idx = n_out
        y, f = y_new, f_new

    out[idx:] = y
    return out


def integrate(problem: OdeProblem, cfg: IntegratorConfig, output_grid: Sequence[float]) -> np.ndarray:
    """
    Integrate ``problem`` and return the states at ``output_grid``.

    Returns:
        Array of shape (len(output_grid), problem.dimension).

    Raises:
        IntegrationError: step-size underflow, too many steps or a
            non-finite derivative; the error carries the time of failure.
    """
    grid = np.asarray(output_grid, dtype=float)
    t0, t_end = problem.t_span
    _check_grid(grid, t0, t_end)
    if cfg.method == 'rk4_fixed':
        return _integrate_rk4(problem, cfg, grid)
    return _integrate_rk45(problem, cfg, grid)


def integrate_piecewise(
    rhs_for_segment: Callable[[int], RhsFunction],
    breakpoints: Sequence[float],
    y0: np.ndarray,
    cfg: IntegratorConfig,
    output_grid: Sequence[float],
) -> np.ndarray:
    """
    Integrate across input discontinuities, restarting at every breakpoint.

    ``rhs_for_segment(k)`` returns the right-hand side valid on
    [breakpoints[k], breakpoints[k + 1]]. Integration starts at
    breakpoints[0] and stops at the last output time.
    """
    bp = np.asarray(breakpoints, dtype=float)
    grid = np.asarray(output_grid, dtype=float)
    _check_grid(grid, bp[0], bp[-1])
    dim = len(y0)
    out = np.empty((len(grid), dim))
    y = np.array(y0, dtype=float)
    t_stop = grid[-1]
    idx = 0
    while idx < len(grid) and grid[idx] <= bp[0]:
        out[idx] = y
        idx += 1

    for k in range(len(bp) - 1):
        a, b = bp[k], min(bp[k + 1], t_stop)
        if a >= t_stop:
            break
        n_out = np.searchsorted(grid, b, side='right')
        sub_grid = np.append(grid[idx:n_out], b)
        problem = OdeProblem(dimension=dim, rhs=rhs_for_segment(k), t_span=(a, b), y0=y)
        states = integrate(problem, cfg, sub_grid)
        out[idx:n_out] = states[:-1]
        y = states[-1]
        idx = n_out

    out[idx:] = y
    return out
