import os
import sys

import pytest

sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from src.dist_core import ExampleOneParams, example_one, make_distribution, make_rng


@pytest.fixture
def ex1_params():
    return ExampleOneParams(alpha=2.91, beta=1.89, n=10)


@pytest.fixture
def ex1_dist(ex1_params):
    return example_one(ex1_params)


@pytest.fixture
def three_atoms():
    return make_distribution([1.0, 2.0, 3.0], [0.5, 0.3, 0.2])


@pytest.fixture
def rng():
    return make_rng(12345)
