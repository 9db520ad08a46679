import math

import numpy as np
import pytest

from src.dist_core import ExampleOneParams, example_one, make_distribution, make_rng
from src.mechanisms import MechanismSpec, ReserveProfile
from src.revenue_eval import (
    EnumerationCapError,
    EvalConfig,
    RevenueEstimate,
    asp_iid_exact,
    best_anonymous_reserve,
    best_esp_reserves_iid,
    best_reserves_iid,
    example_one_esp_exact,
    example_one_esp_finite,
    example_one_myerev_finite,
    example_one_two_class_spec,
    exact_expected_revenue,
    expected_revenue,
    mc_expected_revenue,
    myerson_iid_exact,
    reserve_counts,
)
from src.verify import random_params

COIN = make_distribution([0, 1], [0.5, 0.5])

# (alpha, beta) pairs valid for every n >= 2
EX1_POINTS = [(2.91, 1.89), (1.1, 0.6), (1.5, 1.0), (3.0, 1.9), (1.05, 2.0)]


def esp(*r):
    return MechanismSpec(kind="esp", reserves=ReserveProfile(reserves=tuple(float(v) for v in r)))


@pytest.fixture
def cfg():
    return EvalConfig(seed=20190601, mc_samples=200_000)


def test_second_price_on_coin():
    assert exact_expected_revenue(esp(0, 0), COIN, 2).mean == pytest.approx(0.25)


def test_reserve_one_on_coin():
    assert exact_expected_revenue(esp(1, 1), COIN, 2).mean == pytest.approx(0.75)


@pytest.mark.parametrize("kind", ["esp", "lsp", "spm", "asp"])
def test_point_mass_revenue(kind):
    dist = make_distribution([4], [1.0])
    if kind == "asp":
        spec = MechanismSpec(kind="asp", reserve=0.0)
    else:
        spec = MechanismSpec(kind=kind, reserves=ReserveProfile.anonymous(0.0, 3))
    expected = 0.0 if kind == "spm" else 4.0
    assert exact_expected_revenue(spec, dist, 3).mean == pytest.approx(expected)


def test_spm_point_mass_at_price():
    dist = make_distribution([4], [1.0])
    spec = MechanismSpec(kind="spm", reserves=ReserveProfile.anonymous(4.0, 3))
    assert exact_expected_revenue(spec, dist, 3).mean == pytest.approx(4.0)


def test_collapsed_equals_naive(rng):
    for k in range(12):
        dist = make_distribution([0, 1, 3], rng.dirichlet(np.ones(3)))
        n = int(rng.integers(1, 6))
        r = tuple(rng.choice([0.0, 1.0, 3.0], size=n))
        kind = ("esp", "lsp", "spm")[k % 3]
        spec = MechanismSpec(kind=kind, reserves=ReserveProfile(reserves=r))
        a = exact_expected_revenue(spec, dist, n, collapse=True).mean
        b = exact_expected_revenue(spec, dist, n, collapse=False).mean
        assert a == pytest.approx(b, abs=1e-12)


def test_enumeration_cap_names_required_size(ex1_dist):
    spec = example_one_two_class_spec(ExampleOneParams(alpha=2.91, beta=1.89, n=10), 0.4)
    with pytest.raises(EnumerationCapError) as err:
        exact_expected_revenue(spec, ex1_dist, 10, EvalConfig(enumeration_cap=1000), collapse=False)
    assert err.value.required == 3**10
    assert "59049" in str(err.value)


def test_mc_point_mass_has_zero_error(cfg):
    est = mc_expected_revenue(esp(0, 0), make_distribution([5], [1.0]), 2, cfg)
    assert est.mean == 5.0
    assert est.std_error == 0.0
    assert est.method == "monte_carlo"


def test_mc_agrees_with_exact_on_coin(cfg):
    est = mc_expected_revenue(esp(0, 0), COIN, 2, cfg)
    assert abs(est.mean - 0.25) <= 3 * est.std_error


def test_mc_is_reproducible(cfg, three_atoms):
    a = mc_expected_revenue(esp(2, 1, 0), three_atoms, 3, cfg)
    b = mc_expected_revenue(esp(2, 1, 0), three_atoms, 3, cfg)
    assert a == b


def test_mc_block_size_does_not_change_the_mean(three_atoms):
    # blocks draw from one stream, so only the merge order differs
    big = EvalConfig(seed=5, mc_samples=50_000, block_size=50_000)
    small = EvalConfig(seed=5, mc_samples=50_000, block_size=7_000)
    a = mc_expected_revenue(esp(0, 0), three_atoms, 2, big)
    b = mc_expected_revenue(esp(0, 0), three_atoms, 2, small)
    assert a.mean == pytest.approx(b.mean, abs=1e-12)
    assert a.std_error == pytest.approx(b.std_error, rel=1e-9)


def test_mc_needs_two_samples(three_atoms):
    with pytest.raises(ValueError):
        mc_expected_revenue(esp(0, 0), three_atoms, 2, EvalConfig(mc_samples=1))


def test_mc_myerson_example_one(cfg, ex1_params, ex1_dist):
    spec = MechanismSpec(kind="myerson-ex1", params=ex1_params)
    est = mc_expected_revenue(spec, ex1_dist, 10, cfg)
    assert abs(est.mean - myerson_iid_exact(ex1_dist, 10).mean) <= 3 * est.std_error


def test_myerson_closed_form_small_cases():
    assert myerson_iid_exact(make_distribution([3], [1.0]), 4).mean == pytest.approx(3.0)
    assert myerson_iid_exact(COIN, 2).mean == pytest.approx(0.75)


@pytest.mark.parametrize("alpha, beta", EX1_POINTS)
@pytest.mark.parametrize("n", [2, 3, 5])
def test_myerson_mechanism_identity(alpha, beta, n):
    params = ExampleOneParams(alpha=alpha, beta=beta, n=n)
    dist = example_one(params)
    spec = MechanismSpec(kind="myerson-ex1", params=params)
    mech = exact_expected_revenue(spec, dist, n).mean
    assert mech == pytest.approx(myerson_iid_exact(dist, n).mean, abs=1e-9)
    assert example_one_myerev_finite(params) == pytest.approx(mech, abs=1e-9)


def test_myerev_finite_formula(ex1_params):
    a, b, n = ex1_params.alpha, ex1_params.beta, ex1_params.n
    expected = n * (1 - (1 - 1 / n**2) ** n) + (a - 1) / (b - 1 / n) * ((1 - 1 / n**2) ** n - (1 - b / n) ** n)
    assert example_one_myerev_finite(ex1_params) == pytest.approx(expected, rel=1e-12)


def test_myerev_converges():
    limit = 1 + (1.91 / 1.89) * (1 - math.exp(-1.89))
    errors = [
        abs(example_one_myerev_finite(ExampleOneParams(alpha=2.91, beta=1.89, n=n)) - limit)
        for n in (100, 1000, 10_000, 1_000_000)
    ]
    assert errors[-1] < 1e-3
    assert all(x > y for x, y in zip(errors, errors[1:]))
    assert limit == pytest.approx(1.85792, abs=5e-5)


def test_myerev_at_alpha_equals_beta_equals_n():
    assert example_one_myerev_finite(ExampleOneParams(alpha=1000, beta=1000, n=1000)) == pytest.approx(2.0, abs=0.01)


def test_esp_finite_endpoints(ex1_params):
    a, b, n = ex1_params.alpha, ex1_params.beta, ex1_params.n
    assert example_one_esp_finite(ex1_params, 1.0) == pytest.approx(n * (1 - (1 - 1 / n**2) ** n))
    assert example_one_esp_finite(ex1_params, 0.0) == pytest.approx((a / b) * (1 - (1 - b / n) ** n))


def test_esp_finite_rejects_fractional_class(ex1_params):
    with pytest.raises(ValueError, match="integer"):
        example_one_esp_finite(ex1_params, 0.05)


@pytest.mark.parametrize("n", [8, 10, 12])
def test_esp_finite_sandwich(n):
    params = ExampleOneParams(alpha=2.91, beta=1.89, n=n)
    dist = example_one(params)
    for k in range(n + 1):
        z = k / n
        exact = exact_expected_revenue(example_one_two_class_spec(params, z), dist, n).mean
        gap = exact - example_one_esp_finite(params, z)
        assert -1e-12 <= gap <= 1 / n
        assert example_one_esp_exact(params, z) == pytest.approx(exact, abs=1e-9)


def test_two_class_spec(ex1_params):
    spec = example_one_two_class_spec(ex1_params, 0.4)
    assert reserve_counts(spec.reserves) == [(10.0, 4), (pytest.approx(2.91 / 1.89), 6)]


def test_best_reserves_point_mass():
    profile, est = best_esp_reserves_iid(make_distribution([2], [1.0]), 3)
    assert profile.reserves == (2.0, 2.0, 2.0)
    assert est.mean == pytest.approx(2.0)


def test_best_reserves_coin():
    profile, est = best_reserves_iid(COIN, 2, kind="esp")
    assert profile.reserves == (1.0, 1.0)
    assert est.mean == pytest.approx(0.75)


def test_best_reserves_example_one_skips_zero():
    params = ExampleOneParams(alpha=2.91, beta=1.89, n=12)
    profile, _ = best_esp_reserves_iid(example_one(params), 12)
    assert set(profile.reserves) <= {params.mid_value, params.high_value}


def test_best_reserves_cap():
    dist = make_distribution([0, 1, 2], [0.2, 0.3, 0.5])
    with pytest.raises(EnumerationCapError):
        best_reserves_iid(dist, 6, EvalConfig(enumeration_cap=10))


def test_best_reserves_mc_fallback():
    dist = make_distribution([0, 1], [0.5, 0.5])
    cfg = EvalConfig(enumeration_cap=10, allow_mc_fallback=True, mc_samples=20_000, seed=3)
    _, est = best_reserves_iid(dist, 3, cfg)
    assert est.method == "monte_carlo"


def test_anonymous_reserve_coin():
    r, est = best_anonymous_reserve(COIN, 2)
    assert r == 1.0
    assert est.mean == pytest.approx(0.75)
    assert asp_iid_exact(COIN, 2, 0.0).mean == pytest.approx(0.25)


def test_anonymous_reserve_by_monte_carlo():
    r, est = best_anonymous_reserve(COIN, 2, EvalConfig(seed=5, mc_samples=100_000), method="mc")
    assert r == 1.0
    assert est.method == "monte_carlo"
    assert abs(est.mean - 0.75) <= 3 * est.std_error


def test_anonymous_reserve_point_mass():
    assert best_anonymous_reserve(make_distribution([7], [1.0]), 4) == (7.0, RevenueEstimate(mean=7.0, method="exact"))


def test_anonymous_reserve_at_alpha_equals_beta_equals_n():
    _, est = best_anonymous_reserve(example_one(ExampleOneParams(alpha=1000, beta=1000, n=1000)), 1000)
    assert est.mean == pytest.approx(1.0, abs=0.01)


def test_asp_closed_form_matches_enumeration(rng):
    for _ in range(10):
        dist = make_distribution([0, 1, 2, 4], rng.dirichlet(np.ones(4)))
        n = int(rng.integers(1, 6))
        r = float(rng.choice(dist.support))
        enumerated = exact_expected_revenue(MechanismSpec(kind="asp", reserve=r), dist, n).mean
        assert asp_iid_exact(dist, n, r).mean == pytest.approx(enumerated, abs=1e-12)


def test_dominance_chain(rng):
    for _ in range(10):
        n = int(rng.integers(1, 5))
        dist = make_distribution(rng.choice(np.arange(11), size=3, replace=False), rng.dirichlet(np.ones(3)))
        mye = myerson_iid_exact(dist, n).mean
        _, best_esp = best_reserves_iid(dist, n, kind="esp")
        _, best_lsp = best_reserves_iid(dist, n, kind="lsp")
        _, best_spm = best_reserves_iid(dist, n, kind="spm")
        assert best_lsp.mean <= best_esp.mean + 1e-9
        assert best_esp.mean <= mye + 1e-9
        assert best_spm.mean <= mye + 1e-9
        for _ in range(5):
            prices = ReserveProfile(reserves=tuple(rng.uniform(0, 11, size=n)))
            with_esp = exact_expected_revenue(MechanismSpec(kind="esp", reserves=prices), dist, n).mean
            with_spm = exact_expected_revenue(MechanismSpec(kind="spm", reserves=prices), dist, n).mean
            assert with_spm <= with_esp + 1e-9


def test_expected_revenue_dispatch(cfg):
    assert expected_revenue(esp(0, 0), COIN, 2, cfg).method == "exact"
    assert expected_revenue(esp(0, 0), COIN, 2, cfg, method="mc").method == "monte_carlo"


@pytest.mark.slow
@pytest.mark.parametrize("kind", ["esp", "lsp", "asp", "spm", "myerson-ex1"])
def test_mc_oracle_agreement_full_scale(kind):
    rng = make_rng(99)
    for k in range(20):
        n = int(rng.integers(2, 7))
        if kind == "myerson-ex1":
            params = random_params(rng, n)
            dist, spec = example_one(params), MechanismSpec(kind=kind, params=params)
        else:
            dist = make_distribution(rng.choice(np.arange(11), size=3, replace=False), rng.dirichlet(np.ones(3)))
            if kind == "asp":
                spec = MechanismSpec(kind="asp", reserve=float(rng.choice(dist.support)))
            else:
                spec = MechanismSpec(kind=kind, reserves=ReserveProfile(reserves=tuple(rng.choice(dist.support, size=n))))
        exact = exact_expected_revenue(spec, dist, n).mean
        est = mc_expected_revenue(spec, dist, n, EvalConfig(seed=1000 + k, mc_samples=1_000_000))
        assert abs(est.mean - exact) <= 3 * est.std_error + 1e-12


def test_myerson_ignores_negligible_atom():
    tiny = make_distribution([0, 1, 2], [1e-17, 0.5, 0.5])
    plain = make_distribution([1, 2], [0.5, 0.5])
    assert myerson_iid_exact(tiny, 3).mean == pytest.approx(myerson_iid_exact(plain, 3).mean)
    assert myerson_iid_exact(plain, 3).mean == pytest.approx(1.75)
