import numpy as np
import pytest

from src.dist_core import ExampleOneParams, example_one, make_distribution
from src.ironing import (
    RevenueCurve,
    brute_force_envelope,
    envelope_at,
    iron,
    ironed_virtual_values,
    is_regular,
    revenue_curve,
)


def test_example_one_curve(ex1_params, ex1_dist):
    a, b, n = ex1_params.alpha, ex1_params.beta, ex1_params.n
    curve = revenue_curve(ex1_dist)
    expected = [(0, 0), (1 / n**2, 1 / n), (b / n, a / n), (1, 0)]
    assert np.allclose(np.asarray(curve.breakpoints), np.asarray(expected), atol=1e-15)
    assert curve.segment_value == pytest.approx((n, a / b, 0.0))


def test_point_mass_curve():
    curve = revenue_curve(make_distribution([1], [1.0]))
    assert curve.breakpoints == ((0.0, 0.0), (1.0, 1.0))


def test_two_atom_curve():
    curve = revenue_curve(make_distribution([0, 1], [0.5, 0.5]))
    assert curve.breakpoints == ((0.0, 0.0), (0.5, 0.5), (1.0, 0.0))


def test_curve_validation():
    with pytest.raises(ValueError, match="start at"):
        RevenueCurve(breakpoints=((0.1, 0.0), (1.0, 1.0)), segment_value=(1.0,))
    with pytest.raises(ValueError, match="end at q = 1"):
        RevenueCurve(breakpoints=((0.0, 0.0), (0.5, 0.5)), segment_value=(1.0,))
    with pytest.raises(ValueError, match="strictly ascending"):
        RevenueCurve(breakpoints=((0.0, 0.0), (0.5, 0.5), (0.5, 0.4), (1.0, 0.0)), segment_value=(1.0, 0.8, 0.0))


def test_example_one_ironing(ex1_params, ex1_dist):
    a, b, n = ex1_params.alpha, ex1_params.beta, ex1_params.n
    ironed = iron(revenue_curve(ex1_dist))
    assert ironed.hull_indices == (0, 1, 2, 3)
    phi = ironed.ironed_value_of
    assert phi[float(n)] == pytest.approx(n)
    assert phi[a / b] == pytest.approx((a - 1) / (b - 1 / n))
    assert phi[0.0] < 0


def test_example_one_values_at_n_100():
    dist = example_one(ExampleOneParams(alpha=2.91, beta=1.89, n=100))
    phi = ironed_virtual_values(dist)
    assert phi[100.0] == pytest.approx(100.0)
    assert phi[2.91 / 1.89] == pytest.approx(1.91 / 1.88)
    assert phi[2.91 / 1.89] == pytest.approx(1.01596, abs=1e-5)


def test_point_mass_phi():
    assert ironed_virtual_values(make_distribution([4], [1.0])) == {4.0: 4.0}


def test_two_atom_phi():
    assert ironed_virtual_values(make_distribution([0, 1], [0.5, 0.5])) == pytest.approx({1.0: 1.0, 0.0: -1.0})


def test_non_regular_distribution_is_ironed():
    dist = make_distribution([1, 2, 3], [0.45, 0.1, 0.45])
    ironed = iron(revenue_curve(dist))
    assert ironed.hull_indices == (0, 1, 3)
    phi = ironed.ironed_value_of
    assert phi[3.0] == pytest.approx(3.0)
    assert phi[2.0] == pytest.approx(-7 / 11)
    assert phi[1.0] == pytest.approx(-7 / 11)
    assert not is_regular(dist)


def test_regular_distribution_keeps_every_breakpoint():
    dist = make_distribution([0, 1, 2], [1 / 3, 1 / 3, 1 / 3])
    curve = revenue_curve(dist)
    assert is_regular(dist)
    assert iron(curve).hull_indices == (0, 1, 2, 3)
    assert np.allclose(envelope_at(iron(curve), curve.q), brute_force_envelope(curve))


def test_collinear_points_are_dropped():
    # (0.5, 0.5) lies on the chord from (0, 0) to (1, 1)
    curve = RevenueCurve(breakpoints=((0.0, 0.0), (0.5, 0.5), (1.0, 1.0)), segment_value=(1.0, 1.0))
    assert iron(curve).hull_indices == (0, 2)


def test_hull_matches_brute_force_on_random_curves(rng):
    for _ in range(100):
        k = int(rng.integers(1, 9))
        support = np.sort(rng.choice(np.arange(41), size=k, replace=False))
        probs = rng.dirichlet(np.ones(k))
        curve = revenue_curve(make_distribution(support, probs / probs.sum()))
        ironed = iron(curve)
        env = envelope_at(ironed, curve.q)
        assert np.allclose(env, brute_force_envelope(curve), atol=1e-9)
        assert np.all(env >= curve.r - 1e-12)
        slopes = np.asarray(ironed.hull_slopes)
        assert np.all(np.diff(slopes) < 0)
        phis = [ironed.ironed_value_of[s] for s in curve.segment_value]
        # segment_value runs from the highest value down
        assert all(x >= y for x, y in zip(phis, phis[1:]))
        assert ironed.hull_points[-1][0] == 1.0
        assert slopes[-1] == pytest.approx(min(phis))


def test_phi_table(three_atoms):
    frame = iron(revenue_curve(three_atoms)).to_frame()
    assert list(frame["value"]) == [3.0, 2.0, 1.0]
    assert list(frame.columns) == ["value", "q_low", "q_high", "revenue_at_q_high", "ironed_virtual_value"]


@pytest.mark.parametrize("eps", [1e-17, 1e-16, 1e-13])
def test_negligible_lowest_atom(eps):
    dist = make_distribution([0, 1, 2], [eps, 0.5, 0.5])
    curve = revenue_curve(dist)
    assert curve.q[-1] == 1.0
    assert curve.absorbed == ((0.0, 1),)
    assert ironed_virtual_values(dist) == pytest.approx({2.0: 2.0, 1.0: 0.0, 0.0: 0.0})


def test_negligible_middle_atom_shares_the_interval_below():
    dist = make_distribution([0, 1, 2], [0.5, 1e-17, 0.5])
    ironed = iron(revenue_curve(dist))
    assert ironed.ironed_value_of == pytest.approx({2.0: 2.0, 1.0: -2.0, 0.0: -2.0})
    frame = ironed.to_frame()
    assert list(frame["value"]) == [2.0, 1.0, 0.0]
    assert frame.loc[1, "q_low"] == frame.loc[1, "q_high"] == 0.5


def test_absorbed_atoms_must_point_at_an_interval():
    with pytest.raises(ValueError, match="absorbed"):
        RevenueCurve(
            breakpoints=((0.0, 0.0), (1.0, 1.0)), segment_value=(1.0,), absorbed=((0.0, 1),)
        )
