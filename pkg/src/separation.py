"""
Large-n limits for the two-point-plus-zero family and the ESP/Myerson ratio.

With alpha > 1 and beta > 0, Myerson's revenue tends to
1 + (alpha - 1)(1 - e^-beta)/beta, while a two-class ESP that puts a fraction
z of the buyers at reserve n earns at most z + (alpha/beta)(1 - e^-beta(1-z)).
The ESP bound is concave in z and peaks at z* = 1 - ln(alpha)/beta, clamped
to [0, 1].
"""

from __future__ import annotations

import logging
import math
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, model_validator

from src.dist_core import ExampleOneParams
from src.revenue_eval import example_one_esp_finite, example_one_myerev_finite

logger = logging.getLogger(__name__)

ALPHA_MAX = 50.0
BETA_MAX = 50.0


class SeparationReport(BaseModel):
    alpha: float
    beta: float
    myerev_limit: float
    esp_ub_limit: float
    z_star: float
    ratio: float
    optimizer_trace: List[Tuple[float, float, float]] = []

    @model_validator(mode="after")
    def _check(self) -> "SeparationReport":
        if not 0 < self.ratio <= 1 + 1e-12:
            raise ValueError(f"ratio must lie in (0, 1], got {self.ratio}")
        if not 0 <= self.z_star <= 1:
            raise ValueError(f"z_star must lie in [0, 1], got {self.z_star}")
        return self

    def trace_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.optimizer_trace, columns=["alpha", "beta", "ratio"])


class AspCorollaryReport(BaseModel):
    n: int
    myerev: float
    asp_ub: float
    ratio: float


class GridConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    alpha_low: float = 1.0
    alpha_high: float = 10.0
    beta_low: float = 0.0
    beta_high: float = 10.0
    step: float = 0.01

    @model_validator(mode="after")
    def _check(self) -> "GridConfig":
        if self.step <= 0:
            raise ValueError("grid step must be > 0")
        if self.alpha_low < 1 or self.alpha_high > ALPHA_MAX:
            raise ValueError(f"alpha bounds must lie within (1, {ALPHA_MAX}]")
        if self.beta_low < 0 or self.beta_high > BETA_MAX:
            raise ValueError(f"beta bounds must lie within (0, {BETA_MAX}]")
        return self

    def _axis(self, low: float, high: float, floor: float) -> np.ndarray:
        k = np.arange(0, math.floor((high - low) / self.step + 1e-9) + 1)
        points = np.round(low + self.step * k, 10)
        return points[points > floor]

    def alphas(self) -> np.ndarray:
        return self._axis(self.alpha_low, self.alpha_high, 1.0)

    def betas(self) -> np.ndarray:
        return self._axis(self.beta_low, self.beta_high, 0.0)


class RefineConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    initial_step: float = 0.01
    min_step: float = 1e-5
    tol: float = 1e-10
    max_iter: int = 100_000
    start: Optional[Tuple[float, float]] = None


def _check_domain(alpha: float, beta: float) -> None:
    if not alpha > 1:
        raise ValueError(f"alpha > 1 required, got {alpha}")
    if not beta > 0:
        raise ValueError(f"beta > 0 required, got {beta}")


def myerev_limit(alpha: float, beta: float) -> float:
    _check_domain(alpha, beta)
    return 1.0 + (alpha - 1.0) * -math.expm1(-beta) / beta


def esp_limit_at_z(alpha: float, beta: float, z: float) -> float:
    _check_domain(alpha, beta)
    if not 0 <= z <= 1:
        raise ValueError(f"z must lie in [0, 1], got {z}")
    return z + (alpha / beta) * -math.expm1(-beta * (1.0 - z))


def esp_ub_limit(alpha: float, beta: float) -> Tuple[float, float]:
    _check_domain(alpha, beta)
    z_star = min(max(1.0 - math.log(alpha) / beta, 0.0), 1.0)
    return z_star, esp_limit_at_z(alpha, beta, z_star)


def ratio(alpha: float, beta: float) -> float:
    z_star, esp = esp_ub_limit(alpha, beta)
    if 0 < z_star < 1:
        num = beta + alpha - 1.0 - math.log(alpha)
        den = beta + (alpha - 1.0) * -math.expm1(-beta)
        return num / den
    return esp / myerev_limit(alpha, beta)


def ratio_grid(alphas: np.ndarray, betas: np.ndarray) -> np.ndarray:
    """Clamped ratio on the (alpha, beta) mesh, indexed [alpha, beta]."""
    a, b = np.meshgrid(np.asarray(alphas, float), np.asarray(betas, float), indexing="ij")
    z = np.clip(1.0 - np.log(a) / b, 0.0, 1.0)
    esp = z + (a / b) * -np.expm1(-b * (1.0 - z))
    mye = 1.0 + (a - 1.0) * -np.expm1(-b) / b
    return esp / mye


def report_at(alpha: float, beta: float, trace: Optional[List[Tuple[float, float, float]]] = None) -> SeparationReport:
    z_star, esp = esp_ub_limit(alpha, beta)
    return SeparationReport(
        alpha=alpha,
        beta=beta,
        myerev_limit=myerev_limit(alpha, beta),
        esp_ub_limit=esp,
        z_star=z_star,
        ratio=ratio(alpha, beta),
        optimizer_trace=trace or [],
    )


def _coordinate_descent(
    start: Tuple[float, float], box: GridConfig, cfg: RefineConfig
) -> List[Tuple[float, float, float]]:
    lows = (max(box.alpha_low, 1.0 + 1e-9), max(box.beta_low, 1e-9))
    highs = (box.alpha_high, box.beta_high)
    x = [min(max(start[0], lows[0]), highs[0]), min(max(start[1], lows[1]), highs[1])]
    f = ratio(*x)
    trace = [(x[0], x[1], f)]
    step = cfg.initial_step
    for _ in range(cfg.max_iter):
        if step < cfg.min_step:
            break
        moved = False
        for axis in (0, 1):
            for sign in (1.0, -1.0):
                cand = list(x)
                cand[axis] = min(max(cand[axis] + sign * step, lows[axis]), highs[axis])
                if cand == x:
                    continue
                fc = ratio(*cand)
                if f - fc > cfg.tol:
                    x, f = cand, fc
                    trace.append((x[0], x[1], f))
                    moved = True
                    break
            if moved:
                break
        if not moved:
            step /= 2.0
    return trace


def minimize_ratio(
    grid: Optional[GridConfig] = None, refine: Optional[RefineConfig] = None
) -> SeparationReport:
    """Grid scan followed by coordinate descent with a halving step."""
    grid = grid or GridConfig()
    refine = refine or RefineConfig()
    alphas, betas = grid.alphas(), grid.betas()
    if len(alphas) == 0 or len(betas) == 0:
        raise ValueError("ratio grid is empty; widen the bounds or shrink the step")

    surface = ratio_grid(alphas, betas)
    # argmin keeps the lexicographically smallest (alpha, beta) among ties
    i, j = np.unravel_index(np.argmin(surface), surface.shape)
    grid_best = (float(alphas[i]), float(betas[j]), float(surface[i, j]))
    logger.debug("grid scan over %d points: best %s", surface.size, grid_best)

    start = refine.start or grid_best[:2]
    trace = _coordinate_descent(start, grid, refine)
    alpha, beta, _ = trace[-1]
    logger.debug("refinement took %d moves, ended at (%.6f, %.6f)", len(trace) - 1, alpha, beta)
    return report_at(alpha, beta, trace)


def finite_ratio(params: ExampleOneParams) -> Tuple[float, float]:
    """(best z, max over z of the finite ESP expression / finite Myerson revenue)."""
    n = params.n
    best_z, best = 0.0, -1.0
    for k in range(n + 1):
        value = example_one_esp_finite(params, k / n)
        if value > best:
            best_z, best = k / n, value
    return best_z, best / example_one_myerev_finite(params)


def asp_corollary(n: int) -> AspCorollaryReport:
    if n < 2:
        raise ValueError(f"n >= 2 required, got {n}")
    params = ExampleOneParams(alpha=n, beta=n, n=n)
    myerev = example_one_myerev_finite(params)
    # anonymous reserves put every buyer in one class: z = 0 or z = 1
    asp_ub = max(example_one_esp_finite(params, 0.0), example_one_esp_finite(params, 1.0))
    return AspCorollaryReport(n=n, myerev=myerev, asp_ub=asp_ub, ratio=asp_ub / myerev)
