import json

import numpy as np
import pytest

from src.dist_core import (
    ExampleOneParams,
    example_one,
    load_distribution_spec,
    make_distribution,
    make_rng,
    mean,
    quantile_price,
    sample,
    tail_probabilities,
)


def test_point_mass():
    dist = make_distribution([1], [1.0])
    assert dist.support == (1.0,)
    assert dist.probs == (1.0,)


def test_duplicates_merge():
    dist = make_distribution([0, 2, 2], [0.5, 0.25, 0.25])
    assert dist.support == (0.0, 2.0)
    assert dist.probs == (0.5, 0.5)


def test_unsorted_input_is_sorted():
    dist = make_distribution([3, 1], [0.25, 0.75])
    assert dist.support == (1.0, 3.0)
    assert dist.probs == (0.75, 0.25)


@pytest.mark.parametrize(
    "support, probs, message",
    [
        ([0, 1], [0.4, 0.7], "sum to 1.1"),
        ([0, 1], [-0.1, 1.1], ">= 0"),
        ([-1, 1], [0.5, 0.5], ">= 0"),
        ([0, 1], [1.0], "same length"),
        ([], [], "at least one atom"),
    ],
)
def test_invalid_distributions(support, probs, message):
    with pytest.raises(ValueError, match=message):
        make_distribution(support, probs)


def test_example_one_reference_point():
    dist = example_one(ExampleOneParams(alpha=2.91, beta=1.89, n=100))
    assert dist.support[0] == 0.0
    assert dist.support[1] == pytest.approx(1.5396825396825398)
    assert dist.support[2] == 100.0
    assert dist.probs == pytest.approx((0.9811, 0.0188, 0.0001))


def test_example_one_small_n():
    dist = example_one(ExampleOneParams(alpha=2.0, beta=1.5, n=2))
    assert dist.support == pytest.approx((0.0, 4 / 3, 2.0))
    assert dist.probs == pytest.approx((0.25, 0.5, 0.25))


def test_example_one_drops_zero_atom():
    dist = example_one(ExampleOneParams(alpha=1000, beta=1000, n=1000))
    assert dist.support == (1.0, 1000.0)
    assert dist.probs == pytest.approx((1 - 1e-6, 1e-6))


@pytest.mark.parametrize(
    "alpha, beta, n, violated",
    [
        (1.0, 1.0, 10, "alpha > 1"),
        (2.0, 0.0, 10, "beta > 0"),
        (2.0, 1.0, 1, "n >= 2"),
        (2.0, 11.0, 10, "beta/n <= 1"),
        (2.0, 0.05, 10, "1/n^2 <= beta/n"),
        (2.0, 1.0, 2, "alpha/beta < n"),
    ],
)
def test_example_one_names_violated_constraint(alpha, beta, n, violated):
    with pytest.raises(ValueError, match=violated.replace("^", r"\^")):
        ExampleOneParams(alpha=alpha, beta=beta, n=n)


def test_tails_and_mean(three_atoms):
    assert tail_probabilities(three_atoms) == pytest.approx([1.0, 0.5, 0.2])
    assert tail_probabilities(three_atoms)[0] == 1.0
    assert mean(three_atoms) == pytest.approx(1.7)


def test_quantile_on_example_one(ex1_params, ex1_dist):
    n, beta = ex1_params.n, ex1_params.beta
    assert quantile_price(ex1_dist, 1 / n**2) == n
    assert quantile_price(ex1_dist, beta / n) == pytest.approx(ex1_params.alpha / beta)
    assert quantile_price(ex1_dist, 1.0) == 0.0


def test_quantile_point_mass():
    assert quantile_price(make_distribution([5], [1.0]), 1.0) == 5.0


@pytest.mark.parametrize("q", [0.0, -0.1, 1.5])
def test_quantile_out_of_range(three_atoms, q):
    with pytest.raises(ValueError):
        quantile_price(three_atoms, q)


def test_quantile_is_non_increasing(three_atoms):
    prices = [quantile_price(three_atoms, q) for q in np.linspace(0.01, 1.0, 100)]
    assert all(a >= b for a, b in zip(prices, prices[1:]))


def test_sample_point_mass(rng):
    assert list(sample(make_distribution([3], [1.0]), rng, 4)) == [3.0, 3.0, 3.0, 3.0]


def test_sample_empty(three_atoms, rng):
    assert len(sample(three_atoms, rng, 0)) == 0


def test_sample_is_reproducible(three_atoms):
    a = sample(three_atoms, make_rng(7), 1000)
    b = sample(three_atoms, make_rng(7), 1000)
    assert np.array_equal(a, b)


def test_sample_frequency():
    dist = make_distribution([0, 1], [0.5, 0.5])
    draws = sample(dist, make_rng(20190601), 1_000_000)
    assert abs(float(np.mean(draws == 1.0)) - 0.5) < 0.002


def test_load_inline_family():
    dist, params = load_distribution_spec('{"family": "example_one", "alpha": 2.91, "beta": 1.89, "n": 10}')
    assert params == ExampleOneParams(alpha=2.91, beta=1.89, n=10)
    assert dist == example_one(params)


def test_load_file(tmp_path):
    path = tmp_path / "dist.json"
    path.write_text(json.dumps({"support": [1, 2], "probs": [0.5, 0.5]}), encoding="utf-8")
    dist, params = load_distribution_spec(str(path))
    assert params is None
    assert dist.support == (1.0, 2.0)


def test_load_nested_report():
    report = {"manifest": {}, "result": {"distribution": {"support": [0, 4], "probs": [0.75, 0.25]}}}
    dist, _ = load_distribution_spec(json.dumps(report))
    assert dist.probs == (0.75, 0.25)


@pytest.mark.parametrize(
    "text",
    ["not json", "[1, 2]", '{"family": "uniform"}', '{"family": "example_one", "alpha": 2}', '{"support": [1]}'],
)
def test_load_rejects_bad_specs(text):
    with pytest.raises(ValueError):
        load_distribution_spec(text)
