"""
Finite-support valuation distributions.

A DiscreteDistribution is kept in canonical form: support strictly ascending,
duplicate values merged, zero-probability atoms dropped. Quantiles follow the
"maximum price that still sells with probability >= q" convention, which is
the F^-1(1 - q) used by revenue curves.

Sampling uses numpy's Philox-4x64 bit generator. Philox is counter-based and
its bit stream is stable across numpy releases, so a seed pins down every
Monte Carlo run.
"""

from __future__ import annotations

import json
import logging
import os
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

logger = logging.getLogger(__name__)

PROB_TOL = 1e-12
QUANTILE_TOL = 1e-12


class DiscreteDistribution(BaseModel):
    model_config = ConfigDict(frozen=True)

    support: Tuple[float, ...]
    probs: Tuple[float, ...]

    @model_validator(mode="before")
    @classmethod
    def _canonicalize(cls, data: Any) -> Any:
        if not isinstance(data, dict):
            return data
        support = [float(v) for v in data.get("support", ())]
        probs = [float(p) for p in data.get("probs", ())]
        if len(support) != len(probs):
            raise ValueError(
                f"support and probs must have the same length ({len(support)} != {len(probs)})"
            )
        if not support:
            raise ValueError("distribution needs at least one atom")
        for v in support:
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"support values must be finite and >= 0, got {v}")
        for p in probs:
            if not np.isfinite(p) or p < 0:
                raise ValueError(f"probabilities must be finite and >= 0, got {p}")
        total = sum(probs)
        if abs(total - 1.0) > PROB_TOL:
            raise ValueError(f"probabilities sum to {total:.12g}, expected 1")

        merged: Dict[float, float] = {}
        for v, p in zip(support, probs):
            merged[v] = merged.get(v, 0.0) + p
        atoms = sorted((v, p) for v, p in merged.items() if p > 0.0)
        return {"support": tuple(v for v, _ in atoms), "probs": tuple(p for _, p in atoms)}

    @property
    def size(self) -> int:
        return len(self.support)

    @property
    def support_array(self) -> np.ndarray:
        return np.asarray(self.support, dtype=float)

    @property
    def probs_array(self) -> np.ndarray:
        return np.asarray(self.probs, dtype=float)

    def to_spec(self) -> Dict[str, list]:
        return {"support": list(self.support), "probs": list(self.probs)}


class ExampleOneParams(BaseModel):
    """Constants of the two-point-plus-zero family: values 0, alpha/beta, n."""

    model_config = ConfigDict(frozen=True)

    alpha: float
    beta: float
    n: int

    @model_validator(mode="after")
    def _check(self) -> "ExampleOneParams":
        a, b, n = self.alpha, self.beta, self.n
        if not a > 1:
            raise ValueError(f"alpha > 1 violated (alpha={a})")
        if not b > 0:
            raise ValueError(f"beta > 0 violated (beta={b})")
        if n < 2:
            raise ValueError(f"n >= 2 violated (n={n})")
        if b / n > 1:
            raise ValueError(f"beta/n <= 1 violated (beta/n={b / n})")
        if 1.0 / n**2 > b / n:
            raise ValueError(f"1/n^2 <= beta/n violated (beta={b}, n={n})")
        if not a / b < n:
            raise ValueError(f"alpha/beta < n violated (alpha/beta={a / b}, n={n})")
        return self

    @property
    def mid_value(self) -> float:
        return self.alpha / self.beta

    @property
    def high_value(self) -> float:
        return float(self.n)


def make_distribution(support: Sequence[float], probs: Sequence[float]) -> DiscreteDistribution:
    return DiscreteDistribution(support=tuple(support), probs=tuple(probs))


def example_one(params: ExampleOneParams) -> DiscreteDistribution:
    a, b, n = params.alpha, params.beta, params.n
    return make_distribution(
        [0.0, a / b, float(n)],
        [1.0 - b / n, b / n - 1.0 / n**2, 1.0 / n**2],
    )


def tail_probabilities(dist: DiscreteDistribution) -> np.ndarray:
    """P(v >= s) for each support value s, ascending s; the first entry is exactly 1."""
    tails = np.minimum(np.cumsum(dist.probs_array[::-1])[::-1], 1.0)
    tails[0] = 1.0
    return tails


def mean(dist: DiscreteDistribution) -> float:
    return float(np.dot(dist.support_array, dist.probs_array))


def quantile_price(dist: DiscreteDistribution, q: float) -> float:
    if not 0 < q <= 1:
        raise ValueError(f"quantile q must lie in (0, 1], got {q}")
    tails = tail_probabilities(dist)
    eligible = np.nonzero(tails >= q - QUANTILE_TOL)[0]
    if len(eligible) == 0:
        return 0.0
    return float(dist.support[eligible[-1]])


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


def sample(dist: DiscreteDistribution, rng: np.random.Generator, count: int) -> np.ndarray:
    """Inverse-CDF draws over the atoms."""
    if count < 0:
        raise ValueError(f"count must be >= 0, got {count}")
    if count == 0:
        return np.empty(0, dtype=float)
    cdf = np.cumsum(dist.probs_array)
    cdf[-1] = 1.0
    idx = np.searchsorted(cdf, rng.random(count), side="right")
    idx = np.minimum(idx, dist.size - 1)
    return dist.support_array[idx]


# ---------- Spec files ----------

def _read_spec_source(source: str) -> Dict[str, Any]:
    text = source
    if os.path.exists(source):
        with open(source, encoding="utf-8") as f:
            text = f.read()
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as e:
        raise ValueError(f"distribution spec is neither a file nor valid JSON: {e}")
    if not isinstance(obj, dict):
        raise ValueError("distribution spec must be a JSON object")
    return obj


def parse_distribution_spec(
    obj: Dict[str, Any],
) -> Tuple[DiscreteDistribution, Optional[ExampleOneParams]]:
    # iron reports nest the distribution under result.distribution
    if "result" in obj and isinstance(obj["result"], dict):
        return parse_distribution_spec(obj["result"])
    if "distribution" in obj and isinstance(obj["distribution"], dict):
        return parse_distribution_spec(obj["distribution"])

    family = obj.get("family")
    if family is not None:
        if family != "example_one":
            raise ValueError(f"unknown distribution family {family!r}")
        missing = [k for k in ("alpha", "beta", "n") if k not in obj]
        if missing:
            raise ValueError(f"example_one spec is missing {', '.join(missing)}")
        params = ExampleOneParams(alpha=obj["alpha"], beta=obj["beta"], n=obj["n"])
        return example_one(params), params

    if "support" not in obj or "probs" not in obj:
        raise ValueError('distribution spec needs "support" and "probs" or a "family"')
    return make_distribution(obj["support"], obj["probs"]), None


def load_distribution_spec(
    source: str,
) -> Tuple[DiscreteDistribution, Optional[ExampleOneParams]]:
    """Load a distribution from a JSON file path or an inline JSON string."""
    dist, params = parse_distribution_spec(_read_spec_source(source))
    logger.debug("loaded distribution with %d atoms (example_one=%s)", dist.size, params is not None)
    return dist, params
