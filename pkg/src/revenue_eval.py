"""
Expected revenue of the mechanisms under i.i.d. discrete values.

Order of operations for a revenue question:
- Exact enumeration. Buyers that a mechanism treats alike (same reserve) are
  exchangeable, so only value-count vectors per class are enumerated, weighted
  by multinomial probabilities. The naive support^n enumeration is kept as a
  cross-check. Ties are averaged analytically, never sampled.
- Monte Carlo. Profiles are drawn in blocks from one seeded Philox stream;
  block statistics are merged with the parallel mean/variance update.
- Closed forms. Myerson revenue as expected ironed virtual surplus, anonymous
  reserve revenue through the second order statistic, and the finite-n
  expressions for the two-point-plus-zero family.
"""

from __future__ import annotations

import logging
import math
from itertools import combinations_with_replacement
from typing import Iterator, List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.config import default_enumeration_cap, default_mc_samples, default_seed
from src.dist_core import DiscreteDistribution, ExampleOneParams, make_rng, sample
from src.ironing import ironed_virtual_values
from src.mechanisms import MechanismSpec, ReserveProfile, batch_revenue

logger = logging.getLogger(__name__)

CHUNK_ROWS = 200_000
IMPROVEMENT_TOL = 1e-12


class EnumerationCapError(ValueError):
    def __init__(self, required: int, cap: int):
        self.required = required
        self.cap = cap
        super().__init__(
            f"exact enumeration needs {required} profiles but enumeration_cap is {cap}; "
            f"raise the cap to at least {required}"
        )


class EvalConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    enumeration_cap: int = Field(default_factory=default_enumeration_cap)
    mc_samples: int = Field(default_factory=default_mc_samples)
    seed: int = Field(default_factory=default_seed)
    # let reserve searches score candidates by Monte Carlo past the cap
    allow_mc_fallback: bool = False
    block_size: int = 100_000

    @model_validator(mode="after")
    def _check(self) -> "EvalConfig":
        if self.enumeration_cap < 1:
            raise ValueError("enumeration_cap must be >= 1")
        if self.mc_samples < 1:
            raise ValueError("mc_samples must be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be >= 0")
        if self.block_size < 1:
            raise ValueError("block_size must be >= 1")
        return self


class RevenueEstimate(BaseModel):
    model_config = ConfigDict(frozen=True)

    mean: float
    std_error: float = 0.0
    method: Literal["exact", "monte_carlo", "closed_form"]

    @model_validator(mode="after")
    def _check(self) -> "RevenueEstimate":
        if self.std_error < 0:
            raise ValueError("std_error must be >= 0")
        return self


# ---------- Enumeration ----------

def _multisets(m: int, probs: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Sorted support-index tuples of length m with their multinomial probabilities."""
    s = len(probs)
    combos = list(combinations_with_replacement(range(s), m))
    idx = np.array(combos, dtype=int).reshape(len(combos), m)
    weights = np.empty(len(combos))
    for row, combo in enumerate(combos):
        coef, left = 1, m
        w = 1.0
        for j in range(s):
            k = combo.count(j)
            coef *= math.comb(left, k)
            left -= k
            w *= probs[j] ** k
        weights[row] = coef * w
    return idx, weights


def collapsed_size(spec: MechanismSpec, n: int, s: int) -> int:
    return math.prod(math.comb(len(c) + s - 1, s - 1) for c in spec.buyer_classes(n))


def _collapsed_profiles(
    spec: MechanismSpec, dist: DiscreteDistribution, n: int
) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
    probs = dist.probs_array
    per_class = []
    for members in spec.buyer_classes(n):
        combos, w = _multisets(len(members), probs)
        per_class.append((members, combos, w))
    shape = tuple(len(w) for _, _, w in per_class)
    total = math.prod(shape)
    for start in range(0, total, CHUNK_ROWS):
        flat = np.arange(start, min(total, start + CHUNK_ROWS))
        picks = np.unravel_index(flat, shape)
        idx = np.empty((len(flat), n), dtype=int)
        weights = np.ones(len(flat))
        for (members, combos, w), k in zip(per_class, picks):
            idx[:, members] = combos[k]
            weights *= w[k]
        yield idx, weights


def _naive_profiles(dist: DiscreteDistribution, n: int) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
    probs = dist.probs_array
    shape = (dist.size,) * n
    total = dist.size**n
    for start in range(0, total, CHUNK_ROWS):
        flat = np.arange(start, min(total, start + CHUNK_ROWS))
        idx = np.stack(np.unravel_index(flat, shape), axis=1)
        yield idx, probs[idx].prod(axis=1)


def exact_expected_revenue(
    spec: MechanismSpec,
    dist: DiscreteDistribution,
    n: int,
    cfg: Optional[EvalConfig] = None,
    collapse: bool = True,
) -> RevenueEstimate:
    cfg = cfg or EvalConfig()
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    size = collapsed_size(spec, n, dist.size) if collapse else dist.size**n
    if size > cfg.enumeration_cap:
        raise EnumerationCapError(size, cfg.enumeration_cap)

    profiles = _collapsed_profiles(spec, dist, n) if collapse else _naive_profiles(dist, n)
    values = dist.support_array
    parts: List[float] = []
    for idx, weights in profiles:
        rev = batch_revenue(spec, values[idx], rng=None)
        parts.append(math.fsum(weights * rev))
    logger.debug("enumerated %d profiles for %s (n=%d, collapse=%s)", size, spec.kind, n, collapse)
    return RevenueEstimate(mean=math.fsum(parts), method="exact")


# ---------- Monte Carlo ----------

def mc_expected_revenue(
    spec: MechanismSpec,
    dist: DiscreteDistribution,
    n: int,
    cfg: Optional[EvalConfig] = None,
) -> RevenueEstimate:
    cfg = cfg or EvalConfig()
    if cfg.mc_samples < 2:
        raise ValueError(f"mc_samples must be >= 2 for a standard error, got {cfg.mc_samples}")
    rng = make_rng(cfg.seed)
    count, mean, m2 = 0, 0.0, 0.0
    remaining = cfg.mc_samples
    while remaining > 0:
        rows = min(cfg.block_size, remaining)
        bids = sample(dist, rng, rows * n).reshape(rows, n)
        rev = batch_revenue(spec, bids, rng=rng)
        b_mean = float(rev.mean())
        b_m2 = float(((rev - b_mean) ** 2).sum())
        # parallel mean/variance merge
        delta = b_mean - mean
        total = count + rows
        mean += delta * rows / total
        m2 += b_m2 + delta * delta * count * rows / total
        count = total
        remaining -= rows
    variance = m2 / (count - 1)
    return RevenueEstimate(
        mean=mean, std_error=math.sqrt(max(variance, 0.0) / count), method="monte_carlo"
    )


# ---------- Closed forms ----------

def _pow1m(x: float, k: float) -> float:
    """(1 - x)^k without losing the small-x digits."""
    if x >= 1.0:
        return 0.0 if k > 0 else 1.0
    return math.exp(k * math.log1p(-x))


def _one_minus_pow1m(x: float, k: float) -> float:
    """1 - (1 - x)^k."""
    if x >= 1.0:
        return 1.0 if k > 0 else 0.0
    return -math.expm1(k * math.log1p(-x))


def myerson_iid_exact(dist: DiscreteDistribution, n: int) -> RevenueEstimate:
    """Expected ironed virtual surplus E[max(0, max_i phi_bar(v_i))]."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    phi = ironed_virtual_values(dist)
    levels = sorted({phi[s] for s in dist.support if phi[s] > 0}, reverse=True)
    revenue, reached, prev = 0.0, 0.0, 0.0
    for level in levels:
        reached += sum(p for s, p in zip(dist.support, dist.probs) if phi[s] == level)
        now = _one_minus_pow1m(min(reached, 1.0), n)
        revenue += level * (now - prev)
        prev = now
    return RevenueEstimate(mean=revenue, method="exact")


def asp_iid_exact(dist: DiscreteDistribution, n: int, r: float) -> RevenueEstimate:
    """Second price with anonymous reserve r, via the second order statistic."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    s, p = dist.support_array, dist.probs_array
    below = float(p[s < r].sum())
    if n == 1:
        return RevenueEstimate(mean=r * (1.0 - below), method="exact")
    cdf = np.cumsum(p)
    cdf[-1] = 1.0
    second_cdf = cdf**n + n * (1.0 - cdf) * cdf ** (n - 1)
    second_pmf = np.diff(np.concatenate(([0.0], second_cdf)))
    sole_survivor = n * (1.0 - below) * below ** (n - 1)
    revenue = r * sole_survivor + math.fsum((s * second_pmf)[s >= r])
    return RevenueEstimate(mean=revenue, method="exact")


def example_one_myerev_finite(params: ExampleOneParams) -> float:
    a, b, n = params.alpha, params.beta, params.n
    no_high = _pow1m(1.0 / n**2, n)
    no_mid_or_high = _pow1m(b / n, n)
    top = n * _one_minus_pow1m(1.0 / n**2, n)
    denom = b - 1.0 / n
    if denom == 0:
        return top
    return top + (a - 1.0) / denom * (no_high - no_mid_or_high)


def _high_class_size(params: ExampleOneParams, z: float) -> int:
    zn = z * params.n
    k = round(zn)
    if not 0 <= z <= 1 or abs(zn - k) > 1e-9:
        raise ValueError(f"z*n must be an integer in [0, n], got z*n = {zn}")
    return k


def example_one_esp_finite(params: ExampleOneParams, z: float) -> float:
    """
    Two-class ESP revenue (z*n buyers at reserve n, the rest at alpha/beta),
    leaving out only the event of two high values among the low-reserve class,
    which is worth at most 1/n.
    """
    k = _high_class_size(params, z)
    a, b, n = params.alpha, params.beta, params.n
    high_missed = _pow1m(1.0 / n**2, k)
    return n * _one_minus_pow1m(1.0 / n**2, k) + (a / b) * high_missed * _one_minus_pow1m(b / n, n - k)


def example_one_esp_exact(params: ExampleOneParams, z: float) -> float:
    """example_one_esp_finite plus the two-high-values upgrade it omits."""
    k = _high_class_size(params, z)
    n, m = params.n, params.n - k
    p = 1.0 / n**2
    at_least_two = _one_minus_pow1m(p, m) - m * p * _pow1m(p, m - 1) if m >= 2 else 0.0
    upgrade = _pow1m(p, k) * (params.high_value - params.mid_value) * at_least_two
    return example_one_esp_finite(params, z) + upgrade


def example_one_two_class_spec(params: ExampleOneParams, z: float) -> MechanismSpec:
    k = _high_class_size(params, z)
    profile = ReserveProfile.two_class(params.n, k, params.high_value, params.mid_value)
    return MechanismSpec(kind="esp", reserves=profile)


# ---------- Reserve searches ----------

def _score(
    spec: MechanismSpec, dist: DiscreteDistribution, n: int, cfg: EvalConfig, use_mc: bool
) -> RevenueEstimate:
    if use_mc:
        return mc_expected_revenue(spec, dist, n, cfg)
    return exact_expected_revenue(spec, dist, n, cfg)


def best_reserves_iid(
    dist: DiscreteDistribution,
    n: int,
    cfg: Optional[EvalConfig] = None,
    kind: Literal["esp", "lsp", "spm"] = "esp",
) -> Tuple[ReserveProfile, RevenueEstimate]:
    """
    Best personalized reserves (or SPM prices) restricted to support values.
    Buyers are i.i.d., so only how many buyers sit at each support value matters.
    """
    cfg = cfg or EvalConfig()
    s = dist.size
    values = dist.support_array
    n_candidates = math.comb(n + s - 1, s - 1)
    if n_candidates > cfg.enumeration_cap and not cfg.allow_mc_fallback:
        raise EnumerationCapError(n_candidates, cfg.enumeration_cap)

    candidates = list(combinations_with_replacement(range(s - 1, -1, -1), n))
    specs = [
        MechanismSpec(kind=kind, reserves=ReserveProfile(reserves=tuple(values[list(c)])))
        for c in candidates
    ]
    work = sum(collapsed_size(spec, n, s) for spec in specs)
    use_mc = work > cfg.enumeration_cap
    if use_mc and not cfg.allow_mc_fallback:
        raise EnumerationCapError(work, cfg.enumeration_cap)
    logger.debug(
        "searching %d %s reserve vectors (%d profiles, mc=%s)", len(specs), kind, work, use_mc
    )

    best_spec, best = specs[0], _score(specs[0], dist, n, cfg, use_mc)
    for spec in specs[1:]:
        est = _score(spec, dist, n, cfg, use_mc)
        if est.mean > best.mean + IMPROVEMENT_TOL:
            best_spec, best = spec, est
    return best_spec.reserves, best


def best_esp_reserves_iid(
    dist: DiscreteDistribution, n: int, cfg: Optional[EvalConfig] = None
) -> Tuple[ReserveProfile, RevenueEstimate]:
    return best_reserves_iid(dist, n, cfg, kind="esp")


def best_anonymous_reserve(
    dist: DiscreteDistribution,
    n: int,
    cfg: Optional[EvalConfig] = None,
    method: Literal["exact", "mc"] = "exact",
) -> Tuple[float, RevenueEstimate]:
    """Best anonymous reserve over the support, scored in closed form or by MC under cfg."""
    cfg = cfg or EvalConfig()
    best_r, best = None, None
    for r in dist.support:
        if method == "mc":
            est = mc_expected_revenue(MechanismSpec(kind="asp", reserve=r), dist, n, cfg)
        else:
            est = asp_iid_exact(dist, n, r)
        if best is None or est.mean > best.mean + IMPROVEMENT_TOL:
            best_r, best = r, est
    return best_r, best


def expected_revenue(
    spec: MechanismSpec,
    dist: DiscreteDistribution,
    n: int,
    cfg: Optional[EvalConfig] = None,
    method: Literal["exact", "mc"] = "exact",
) -> RevenueEstimate:
    if method == "mc":
        return mc_expected_revenue(spec, dist, n, cfg)
    return exact_expected_revenue(spec, dist, n, cfg)


def reserve_counts(profile: ReserveProfile) -> Sequence[Tuple[float, int]]:
    """(reserve, number of buyers) pairs, highest reserve first."""
    levels, counts = np.unique(np.asarray(profile.reserves), return_counts=True)
    return [(float(v), int(c)) for v, c in sorted(zip(levels, counts), reverse=True)]
