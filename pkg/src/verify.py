"""
Cross-oracle verification suite.

Each property is measured as a worst-case deviation and compared against its
tolerance; the suite prints one line per property. --quick keeps the
instances at n <= 4 and cuts sample counts.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from itertools import product
from typing import Callable, List, Optional, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel

from src.dist_core import (
    DiscreteDistribution,
    ExampleOneParams,
    example_one,
    make_distribution,
    make_rng,
    quantile_price,
    sample,
    tail_probabilities,
)
from src.ironing import brute_force_envelope, envelope_at, iron, revenue_curve
from src.mechanisms import (
    MECHANISM_KINDS,
    BidProfile,
    MechanismSpec,
    ReserveProfile,
    batch_revenue,
    esp_expected_utility,
    run,
    run_esp,
    run_lsp,
    run_myerson_example_one,
)
from src.revenue_eval import (
    EvalConfig,
    asp_iid_exact,
    best_anonymous_reserve,
    best_reserves_iid,
    example_one_esp_finite,
    example_one_myerev_finite,
    example_one_two_class_spec,
    exact_expected_revenue,
    mc_expected_revenue,
    myerson_iid_exact,
)
from src.separation import (
    asp_corollary,
    esp_limit_at_z,
    esp_ub_limit,
    minimize_ratio,
    myerev_limit,
    ratio,
)

logger = logging.getLogger(__name__)

REF_ALPHA, REF_BETA = 2.91, 1.89


class PropertyResult(BaseModel):
    name: str
    measured: float
    tolerance: float
    passed: bool
    seconds: float


class VerifyReport(BaseModel):
    quick: bool
    seed: int
    results: List[PropertyResult]

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    @property
    def failures(self) -> List[str]:
        return [r.name for r in self.results if not r.passed]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([r.model_dump() for r in self.results])


@dataclass
class _Context:
    cfg: EvalConfig
    quick: bool
    mc_sigmas: float
    rng: np.random.Generator = field(init=False)

    def __post_init__(self):
        self.rng = make_rng(self.cfg.seed)


# ---------- Random instances ----------

def random_distribution(rng: np.random.Generator, atoms: int = 3, top: int = 10) -> DiscreteDistribution:
    support = np.sort(rng.choice(np.arange(0, top + 1), size=atoms, replace=False)).astype(float)
    probs = rng.dirichlet(np.ones(atoms))
    return make_distribution(support, probs / probs.sum())


def random_params(rng: np.random.Generator, n: int) -> ExampleOneParams:
    while True:
        try:
            return ExampleOneParams(alpha=rng.uniform(1.05, 4.0), beta=rng.uniform(0.1, n), n=n)
        except ValueError:
            continue


def random_spec(rng: np.random.Generator, kind: str, dist: DiscreteDistribution, n: int) -> MechanismSpec:
    if kind == "asp":
        return MechanismSpec(kind="asp", reserve=float(rng.choice(dist.support)))
    reserves = ReserveProfile(reserves=tuple(rng.choice(dist.support, size=n)))
    return MechanismSpec(kind=kind, reserves=reserves)


# ---------- dist_core ----------

def _quantile_properties(ctx: _Context) -> Tuple[float, float]:
    worst = 0.0
    qs = np.linspace(1e-6, 1.0, 400)
    for _ in range(20):
        dist = random_distribution(ctx.rng, atoms=int(ctx.rng.integers(1, 6)))
        tails = tail_probabilities(dist)
        prices = [quantile_price(dist, q) for q in qs]
        worst = max(worst, max(0.0, float(np.max(np.diff(prices)))))
        for q, p in zip(qs, prices):
            sold = float(tails[dist.support.index(p)]) if p in dist.support else 1.0
            worst = max(worst, q - sold)
    return worst, 1e-12


def _example_one_valid(ctx: _Context) -> Tuple[float, float]:
    worst = 0.0
    for n in (2, 3, 5, 10, 100, 1000):
        for _ in range(10):
            dist = example_one(random_params(ctx.rng, n))
            worst = max(worst, abs(sum(dist.probs) - 1.0))
    return worst, 1e-12


def _sampling_frequencies(ctx: _Context) -> Tuple[float, float]:
    draws = 100_000 if ctx.quick else 1_000_000
    dist = make_distribution([0.0, 1.0], [0.5, 0.5])
    freq = float(np.mean(sample(dist, make_rng(ctx.cfg.seed), draws) == 1.0))
    return abs(freq - 0.5), 3.0 * math.sqrt(0.25 / draws)


# ---------- ironing ----------

def _hull_vs_brute_force(ctx: _Context) -> Tuple[float, float]:
    worst = 0.0
    for _ in range(100):
        dist = random_distribution(ctx.rng, atoms=int(ctx.rng.integers(1, 9)), top=40)
        curve = revenue_curve(dist)
        hull = envelope_at(iron(curve), curve.q)
        worst = max(worst, float(np.max(np.abs(hull - brute_force_envelope(curve)))))
    return worst, 1e-9


def _hull_shape(ctx: _Context) -> Tuple[float, float]:
    """Concavity, domination, monotone phi-bar and the last-segment identity."""
    worst = 0.0
    for _ in range(100):
        dist = random_distribution(ctx.rng, atoms=int(ctx.rng.integers(1, 9)), top=40)
        curve = revenue_curve(dist)
        ironed = iron(curve)
        slopes = np.asarray(ironed.hull_slopes)
        if len(slopes) > 1 and np.any(np.diff(slopes) >= 0):
            return math.inf, 1e-9
        env = envelope_at(ironed, curve.q)
        worst = max(worst, float(np.max(curve.r - env)))
        at_hull = np.asarray([p[1] for p in ironed.hull_points])
        worst = max(worst, float(np.max(np.abs(at_hull - curve.r[list(ironed.hull_indices)]))))
        phis = [ironed.ironed_value_of[s] for s in dist.support]
        worst = max(worst, max(0.0, -float(np.min(np.diff(phis)))) if len(phis) > 1 else 0.0)
        worst = max(worst, abs(ironed.hull_points[-1][0] - 1.0), abs(slopes[-1] - min(phis)))
    return worst, 1e-9


def _example_one_hull(ctx: _Context) -> Tuple[float, float]:
    worst = 0.0
    for n in (10, 100, 1000):
        params = ExampleOneParams(alpha=REF_ALPHA, beta=REF_BETA, n=n)
        a, b = params.alpha, params.beta
        ironed = iron(revenue_curve(example_one(params)))
        expected = [(0.0, 0.0), (1 / n**2, 1 / n), (b / n, a / n), (1.0, 0.0)]
        got = np.asarray(ironed.hull_points)
        worst = max(worst, float(np.max(np.abs(got - np.asarray(expected)))))
        phi = ironed.ironed_value_of
        worst = max(worst, abs(phi[float(n)] - n) / n)
        worst = max(worst, abs(phi[a / b] - (a - 1) / (b - 1 / n)))
        worst = max(worst, max(0.0, phi[0.0]))
    return worst, 1e-9


# ---------- mechanisms ----------

def _esp_allocates(ctx: _Context) -> Tuple[float, float]:
    misses = 0
    for _ in range(2000):
        n = int(ctx.rng.integers(1, 7))
        bids = BidProfile(bids=tuple(ctx.rng.integers(0, 5, size=n).astype(float)))
        reserves = ReserveProfile(reserves=tuple(ctx.rng.integers(0, 5, size=n).astype(float)))
        cleared = any(b >= r for b, r in zip(bids.bids, reserves.reserves))
        if cleared and run_esp(bids, reserves, ctx.rng).winner is None:
            misses += 1
    return float(misses), 0.0


def _lsp_can_leave_clearing_buyer(ctx: _Context) -> Tuple[float, float]:
    """Buyer 1 clears its reserve, but LSP settles on the top bidder, buyer 0, who does not."""
    bids = BidProfile(bids=(5.0, 3.0))
    reserves = ReserveProfile(reserves=(6.0, 2.0))
    lsp = run_lsp(bids, reserves, ctx.rng)
    esp = run_esp(bids, reserves, ctx.rng)
    return (0.0 if lsp.winner is None and esp.winner == 1 else 1.0), 0.0


def _anonymous_esp_equals_lsp(ctx: _Context) -> Tuple[float, float]:
    mismatches = 0
    for seed in range(1000):
        n = int(ctx.rng.integers(1, 6))
        bids = BidProfile(bids=tuple(ctx.rng.integers(0, 4, size=n).astype(float)))
        reserves = ReserveProfile.anonymous(float(ctx.rng.integers(0, 4)), n)
        if run_esp(bids, reserves, make_rng(seed)) != run_lsp(bids, reserves, make_rng(seed)):
            mismatches += 1
    return float(mismatches), 0.0


def _esp_truthful(ctx: _Context) -> Tuple[float, float]:
    grid = (0.0, 1.0, 2.0)
    deviations = (0.0, 0.5, 1.0, 1.5, 2.0, 2.5)
    worst_gain = 0.0
    for n in range(1, 5):
        reserve_vectors = [tuple(ctx.rng.choice(grid, size=n)) for _ in range(4)]
        for reserves in reserve_vectors:
            for values in product(grid, repeat=n):
                for i in range(n):
                    honest = esp_expected_utility(values, values, reserves, i)
                    for d in deviations:
                        bids = list(values)
                        bids[i] = d
                        gain = esp_expected_utility(values, bids, reserves, i) - honest
                        worst_gain = max(worst_gain, gain)
    return worst_gain, 1e-12


def _myerson_payments(ctx: _Context) -> Tuple[float, float]:
    worst = 0.0
    for _ in range(500):
        n = int(ctx.rng.integers(2, 8))
        params = random_params(ctx.rng, n)
        dist = example_one(params)
        bids = BidProfile(bids=tuple(sample(dist, ctx.rng, n)))
        out = run_myerson_example_one(bids, params, ctx.rng)
        if out.winner is None:
            continue
        mid, high = params.mid_value, params.high_value
        if bids.bids[out.winner] >= high:
            worst = max(worst, mid - out.payment, out.payment - high)
        else:
            worst = max(worst, abs(out.payment - mid))
    return worst, 1e-12


def _batch_matches_runs(ctx: _Context) -> Tuple[float, float]:
    """
    Tie-averaged batch revenue against single runs, as a fraction of the allowed
    gap: 1e-9 without a tie at the top, four standard errors of 400 tie draws with one.
    """
    dist = make_distribution([0.0, 1.0, 2.0], [1 / 3, 1 / 3, 1 / 3])
    worst = 0.0
    for k in range(200):
        n = int(ctx.rng.integers(1, 5))
        spec = random_spec(ctx.rng, ("esp", "lsp", "asp", "spm")[k % 4], dist, n)
        bids = BidProfile(bids=tuple(ctx.rng.integers(0, 3, size=n).astype(float)))
        exact = float(batch_revenue(spec, np.asarray([bids.bids]))[0])
        top = max(bids.bids)
        if bids.bids.count(top) == 1:
            gap, allowed = abs(run(spec, bids, ctx.rng).revenue - exact), 1e-9
        else:
            draws = [run(spec, bids, make_rng(s)).revenue for s in range(400)]
            # revenue per draw lies in [0, top], so its std is at most top / 2
            gap, allowed = abs(float(np.mean(draws)) - exact), 4 * (top / 2) / math.sqrt(400) + 1e-9
        worst = max(worst, gap / allowed)
    return worst, 1.0


# ---------- revenue_eval ----------

def mc_oracle_kinds(quick: bool) -> List[str]:
    """Mechanism per MC-vs-exact instance: 20 distributions each, one each when quick."""
    per_kind = 1 if quick else 20
    return [kind for kind in MECHANISM_KINDS for _ in range(per_kind)]


def _mc_vs_exact(ctx: _Context) -> Tuple[float, float]:
    samples = 200_000 if ctx.quick else ctx.cfg.mc_samples
    max_n = 4 if ctx.quick else 6
    worst = 0.0
    for k, kind in enumerate(mc_oracle_kinds(ctx.quick)):
        n = int(ctx.rng.integers(2, max_n + 1))
        if kind == "myerson-ex1":
            params = random_params(ctx.rng, n)
            dist, spec = example_one(params), MechanismSpec(kind=kind, params=params)
        else:
            dist = random_distribution(ctx.rng)
            spec = random_spec(ctx.rng, kind, dist, n)
        exact = exact_expected_revenue(spec, dist, n, ctx.cfg)
        cfg = ctx.cfg.model_copy(update={"mc_samples": samples, "seed": ctx.cfg.seed + k})
        mc = mc_expected_revenue(spec, dist, n, cfg)
        diff = abs(mc.mean - exact.mean)
        if mc.std_error > 0:
            z = diff / mc.std_error
        else:
            z = 0.0 if diff <= 1e-12 else math.inf
        logger.debug("mc vs exact %s n=%d: z=%.3f", kind, n, z)
        worst = max(worst, z)
    return worst, ctx.mc_sigmas


def _collapsed_vs_naive(ctx: _Context) -> Tuple[float, float]:
    worst = 0.0
    for k in range(20):
        n = int(ctx.rng.integers(1, 6))
        dist = random_distribution(ctx.rng)
        spec = random_spec(ctx.rng, ("esp", "lsp", "asp", "spm")[k % 4], dist, n)
        a = exact_expected_revenue(spec, dist, n, ctx.cfg, collapse=True).mean
        b = exact_expected_revenue(spec, dist, n, ctx.cfg, collapse=False).mean
        worst = max(worst, abs(a - b))
        if spec.kind == "asp":
            worst = max(worst, abs(a - asp_iid_exact(dist, n, spec.reserve).mean))
    return worst, 1e-9


def _myerson_identity(ctx: _Context) -> Tuple[float, float]:
    worst = 0.0
    for n in ((2, 3) if ctx.quick else (2, 3, 5)):
        for _ in range(5):
            params = random_params(ctx.rng, n)
            dist = example_one(params)
            spec = MechanismSpec(kind="myerson-ex1", params=params)
            mech = exact_expected_revenue(spec, dist, n, ctx.cfg).mean
            worst = max(worst, abs(mech - myerson_iid_exact(dist, n).mean))
            worst = max(worst, abs(example_one_myerev_finite(params) - myerson_iid_exact(dist, n).mean))
    return worst, 1e-9


def _dominance(ctx: _Context) -> Tuple[float, float]:
    """Myerson >= best ESP >= best LSP; ESP with SPM prices >= SPM; Myerson >= best SPM, ASP."""
    instances = 10 if ctx.quick else 50
    prices_per = 5 if ctx.quick else 20
    worst = 0.0
    for _ in range(instances):
        n = int(ctx.rng.integers(1, 5))
        dist = random_distribution(ctx.rng, atoms=int(ctx.rng.integers(1, 4)))
        mye = myerson_iid_exact(dist, n).mean
        _, esp = best_reserves_iid(dist, n, ctx.cfg, kind="esp")
        _, lsp = best_reserves_iid(dist, n, ctx.cfg, kind="lsp")
        _, spm = best_reserves_iid(dist, n, ctx.cfg, kind="spm")
        _, asp = best_anonymous_reserve(dist, n, ctx.cfg)
        worst = max(worst, lsp.mean - esp.mean, esp.mean - mye, spm.mean - mye, asp.mean - mye)
        for _ in range(prices_per):
            prices = ReserveProfile(reserves=tuple(ctx.rng.uniform(0, dist.support[-1] + 1, size=n)))
            esp_at = exact_expected_revenue(MechanismSpec(kind="esp", reserves=prices), dist, n, ctx.cfg)
            spm_at = exact_expected_revenue(MechanismSpec(kind="spm", reserves=prices), dist, n, ctx.cfg)
            worst = max(worst, spm_at.mean - esp_at.mean, esp_at.mean - mye)
    return worst, 1e-9


def _esp_finite_sandwich(ctx: _Context) -> Tuple[float, float]:
    """Exact two-class ESP minus the finite expression, as a fraction of 1/n; negative gaps fail."""
    worst = 0.0
    for n in ((4,) if ctx.quick else (8, 10, 12)):
        params = ExampleOneParams(alpha=REF_ALPHA, beta=REF_BETA, n=n)
        dist = example_one(params)
        for k in range(n + 1):
            spec = example_one_two_class_spec(params, k / n)
            gap = exact_expected_revenue(spec, dist, n, ctx.cfg).mean - example_one_esp_finite(params, k / n)
            worst = max(worst, gap * n, -gap * 1e9)
    return worst, 1.0


def _example_one_optimum_skips_zero(ctx: _Context) -> Tuple[float, float]:
    """Best ESP reserves for Example 1 never strictly gain from a reserve-0 class."""
    n = 4 if ctx.quick else 12
    params = ExampleOneParams(alpha=REF_ALPHA, beta=REF_BETA, n=n)
    reserves, _ = best_reserves_iid(example_one(params), n, ctx.cfg, kind="esp")
    return float(sum(1 for r in reserves.reserves if r == 0.0)), 0.0


# ---------- separation ----------

def _ratio_consistency(ctx: _Context) -> Tuple[float, float]:
    worst = 0.0
    for _ in range(1000):
        a, b = ctx.rng.uniform(1.001, 20.0), ctx.rng.uniform(0.01, 20.0)
        worst = max(worst, abs(ratio(a, b) * myerev_limit(a, b) - esp_ub_limit(a, b)[1]))
    return worst, 1e-12


def _z_star_local_max(ctx: _Context) -> Tuple[float, float]:
    worst = 0.0
    for _ in range(1000):
        a, b = ctx.rng.uniform(1.001, 20.0), ctx.rng.uniform(0.01, 20.0)
        z, best = esp_ub_limit(a, b)
        if 1e-4 < z < 1 - 1e-4:
            worst = max(worst, esp_limit_at_z(a, b, z + 1e-4) - best, esp_limit_at_z(a, b, z - 1e-4) - best)
    return worst, 1e-12


def _limit_agreement(ctx: _Context) -> Tuple[float, float]:
    """|finite - limit| * n, checked against 10."""
    worst = 0.0
    for n in (1000, 10_000, 100_000, 1_000_000):
        params = ExampleOneParams(alpha=REF_ALPHA, beta=REF_BETA, n=n)
        gap = abs(example_one_myerev_finite(params) - myerev_limit(REF_ALPHA, REF_BETA))
        worst = max(worst, gap * n)
    return worst, 10.0


def _finite_esp_below_limit(ctx: _Context) -> Tuple[float, float]:
    worst = -math.inf
    bound = esp_ub_limit(REF_ALPHA, REF_BETA)[1]
    for n in ((100, 1000) if ctx.quick else (100, 1000, 10_000)):
        params = ExampleOneParams(alpha=REF_ALPHA, beta=REF_BETA, n=n)
        best = max(example_one_esp_finite(params, k / n) for k in range(n + 1))
        worst = max(worst, (best - bound) * n)
    return worst, 1.0


def _optimizer_beats_reference_point(ctx: _Context) -> Tuple[float, float]:
    report = minimize_ratio()
    return report.ratio - ratio(REF_ALPHA, REF_BETA), 0.0


def _asp_corollary_limits(ctx: _Context) -> Tuple[float, float]:
    mid = asp_corollary(1000)
    far = asp_corollary(1_000_000)
    worst = max(abs(mid.myerev - 2) / 0.01, abs(mid.asp_ub - 1) / 0.01, abs(mid.ratio - 0.5) / 0.02)
    return max(worst, abs(far.ratio - 0.5) / 1e-4), 1.0


PROPERTIES: List[Tuple[str, Callable[[_Context], Tuple[float, float]]]] = [
    ("dist_core: quantile monotone and sells with prob >= q", _quantile_properties),
    ("dist_core: example_one yields valid distributions", _example_one_valid),
    ("dist_core: sample frequency within 3 std errors", _sampling_frequencies),
    ("ironing: monotone chain equals O(k^3) chord oracle", _hull_vs_brute_force),
    ("ironing: concavity, domination, monotone phi-bar", _hull_shape),
    ("ironing: Example 1 hull and slopes", _example_one_hull),
    ("mechanisms: ESP allocates whenever a buyer clears", _esp_allocates),
    ("mechanisms: LSP can leave a clearing buyer unserved", _lsp_can_leave_clearing_buyer),
    ("mechanisms: anonymous ESP equals LSP per profile and seed", _anonymous_esp_equals_lsp),
    ("mechanisms: ESP truthful under exhaustive deviations", _esp_truthful),
    ("mechanisms: Myerson Example 1 payments in range", _myerson_payments),
    ("mechanisms: batch revenue matches single runs", _batch_matches_runs),
    ("revenue_eval: MC within sigma band of exact", _mc_vs_exact),
    ("revenue_eval: collapsed enumeration equals naive", _collapsed_vs_naive),
    ("revenue_eval: Myerson mechanism equals ironed surplus", _myerson_identity),
    ("revenue_eval: dominance chain (Myerson, ESP, LSP, SPM)", _dominance),
    ("revenue_eval: finite ESP expression gap in [0, 1/n]", _esp_finite_sandwich),
    ("revenue_eval: Example 1 optimum has no reserve-0 buyer", _example_one_optimum_skips_zero),
    ("separation: ratio * myerev == esp_ub", _ratio_consistency),
    ("separation: z_star is a local max", _z_star_local_max),
    ("separation: finite Myerson within 10/n of limit", _limit_agreement),
    ("separation: finite ESP <= limit bound + 1/n", _finite_esp_below_limit),
    ("separation: optimizer at or below (2.91, 1.89)", _optimizer_beats_reference_point),
    ("separation: ASP corollary limits", _asp_corollary_limits),
]


def verify_suite(
    cfg: Optional[EvalConfig] = None,
    quick: bool = False,
    mc_sigmas: float = 3.0,
    echo: Optional[Callable[[str], None]] = None,
) -> VerifyReport:
    cfg = cfg or EvalConfig()
    ctx = _Context(cfg=cfg, quick=quick, mc_sigmas=mc_sigmas)
    results: List[PropertyResult] = []
    for name, check in PROPERTIES:
        started = time.perf_counter()
        measured, tolerance = check(ctx)
        result = PropertyResult(
            name=name,
            measured=float(measured),
            tolerance=float(tolerance),
            passed=bool(measured <= tolerance),
            seconds=time.perf_counter() - started,
        )
        results.append(result)
        if echo:
            mark = "✅" if result.passed else "❌"
            echo(f"{mark} {name}: measured={result.measured:.6g} tolerance={result.tolerance:.6g}")
    return VerifyReport(quick=quick, seed=cfg.seed, results=results)
