"""
Single-item auction formats on a realised bid profile.

- ESP: eager second price. Drop bidders below their own reserve, then the
  highest survivor wins and pays max(own reserve, second-highest surviving bid).
- LSP: lazy second price. Only the highest bidder is a candidate; the sale happens
  if that bid clears its reserve, at max(own reserve, second-highest bid).
- ASP: second price with one anonymous reserve (eager and lazy coincide).
- SPM: sequential posted prices, offered in descending price order.
- Myerson for the two-point-plus-zero family, by bid brackets.

Ties are broken uniformly at random with the caller's generator. The
vectorised batch_revenue path either resolves ties with a generator or, with
rng=None, returns the revenue averaged over every tie resolution.
"""

from __future__ import annotations

import logging
from typing import List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from src.dist_core import ExampleOneParams

logger = logging.getLogger(__name__)

MechanismKind = Literal["esp", "lsp", "asp", "spm", "myerson-ex1"]
MECHANISM_KINDS: Tuple[str, ...] = ("esp", "lsp", "asp", "spm", "myerson-ex1")


class BidProfile(BaseModel):
    model_config = ConfigDict(frozen=True)

    bids: Tuple[float, ...]

    @model_validator(mode="after")
    def _check(self) -> "BidProfile":
        if not self.bids:
            raise ValueError("bid profile needs at least one buyer")
        if any(b < 0 for b in self.bids):
            raise ValueError("bids must be >= 0")
        return self

    @property
    def n(self) -> int:
        return len(self.bids)


class ReserveProfile(BaseModel):
    """Per-buyer reserves (or posted prices for SPM)."""

    model_config = ConfigDict(frozen=True)

    reserves: Tuple[float, ...]

    @model_validator(mode="after")
    def _check(self) -> "ReserveProfile":
        if any(r < 0 for r in self.reserves):
            raise ValueError("reserves must be >= 0")
        return self

    @classmethod
    def anonymous(cls, r: float, n: int) -> "ReserveProfile":
        return cls(reserves=(float(r),) * n)

    @classmethod
    def two_class(cls, n: int, count_high: int, r_high: float, r_low: float) -> "ReserveProfile":
        """The first count_high buyers get r_high, the rest r_low."""
        if not 0 <= count_high <= n:
            raise ValueError(f"count_high must lie in [0, {n}], got {count_high}")
        return cls(reserves=(float(r_high),) * count_high + (float(r_low),) * (n - count_high))

    def as_array(self, n: int) -> np.ndarray:
        if len(self.reserves) != n:
            raise ValueError(f"reserve profile has {len(self.reserves)} entries for {n} buyers")
        return np.asarray(self.reserves, dtype=float)


class Outcome(BaseModel):
    model_config = ConfigDict(frozen=True)

    winner: Optional[int] = None
    payment: float = 0.0

    @model_validator(mode="after")
    def _check(self) -> "Outcome":
        if self.payment < 0:
            raise ValueError("payment must be >= 0")
        if self.winner is None and self.payment != 0:
            raise ValueError("payment must be 0 when nobody wins")
        return self

    @property
    def revenue(self) -> float:
        return self.payment


NO_SALE = Outcome()


class MechanismSpec(BaseModel):
    """A mechanism id plus the inputs it is run with."""

    model_config = ConfigDict(frozen=True)

    kind: MechanismKind
    reserves: Optional[ReserveProfile] = None
    reserve: Optional[float] = None
    params: Optional[ExampleOneParams] = None

    @model_validator(mode="after")
    def _check(self) -> "MechanismSpec":
        if self.kind in ("esp", "lsp", "spm") and self.reserves is None:
            raise ValueError(f"mechanism {self.kind} needs a reserve/price profile")
        if self.kind == "asp" and (self.reserve is None or self.reserve < 0):
            raise ValueError("mechanism asp needs an anonymous reserve >= 0")
        if self.kind == "myerson-ex1" and self.params is None:
            raise ValueError("mechanism myerson-ex1 needs example_one parameters")
        return self

    def reserves_array(self, n: int) -> np.ndarray:
        if self.kind == "asp":
            return np.full(n, float(self.reserve))
        if self.reserves is None:
            return np.zeros(n)
        return self.reserves.as_array(n)

    def buyer_classes(self, n: int) -> List[np.ndarray]:
        """Groups of buyers the mechanism treats identically."""
        if self.kind in ("asp", "myerson-ex1"):
            return [np.arange(n)]
        r = self.reserves_array(n)
        return [np.nonzero(r == level)[0] for level in np.unique(r)]


# ---------- Single runs ----------

def _bids_and_reserves(bids: BidProfile, reserves: ReserveProfile) -> Tuple[np.ndarray, np.ndarray]:
    return np.asarray(bids.bids, dtype=float), reserves.as_array(bids.n)


def _pick(candidates: Sequence[int], rng: np.random.Generator) -> int:
    if len(candidates) == 1:
        return int(candidates[0])
    return int(candidates[rng.integers(len(candidates))])


def run_esp(bids: BidProfile, reserves: ReserveProfile, rng: np.random.Generator) -> Outcome:
    b, r = _bids_and_reserves(bids, reserves)
    survivors = np.nonzero(b >= r)[0]
    if len(survivors) == 0:
        return NO_SALE
    top = b[survivors].max()
    w = _pick(survivors[b[survivors] == top], rng)
    others = b[survivors[survivors != w]]
    second = float(others.max()) if len(others) else 0.0
    return Outcome(winner=w, payment=max(float(r[w]), second))


def run_lsp(bids: BidProfile, reserves: ReserveProfile, rng: np.random.Generator) -> Outcome:
    b, r = _bids_and_reserves(bids, reserves)
    w = _pick(np.nonzero(b == b.max())[0], rng)
    if b[w] < r[w]:
        return NO_SALE
    others = np.delete(b, w)
    second = float(others.max()) if len(others) else 0.0
    return Outcome(winner=w, payment=max(float(r[w]), second))


def run_asp(bids: BidProfile, r: float, rng: np.random.Generator) -> Outcome:
    return run_esp(bids, ReserveProfile.anonymous(r, bids.n), rng)


def run_spm(bids: BidProfile, prices: ReserveProfile) -> Outcome:
    b, p = _bids_and_reserves(bids, prices)
    # descending price, ties by buyer index
    for i in sorted(range(len(p)), key=lambda i: (-p[i], i)):
        if b[i] >= p[i]:
            return Outcome(winner=i, payment=float(p[i]))
    return NO_SALE


def run_myerson_example_one(
    bids: BidProfile, params: ExampleOneParams, rng: np.random.Generator
) -> Outcome:
    mid, high = params.mid_value, params.high_value
    top = [i for i, v in enumerate(bids.bids) if v >= high]
    middle = [i for i, v in enumerate(bids.bids) if mid <= v < high]
    if len(top) >= 2:
        return Outcome(winner=_pick(top, rng), payment=high)
    if len(top) == 1:
        return Outcome(winner=top[0], payment=high - (high - mid) / (1 + len(middle)))
    if middle:
        return Outcome(winner=_pick(middle, rng), payment=mid)
    return NO_SALE


def run(spec: MechanismSpec, bids: BidProfile, rng: np.random.Generator) -> Outcome:
    if spec.kind == "esp":
        return run_esp(bids, spec.reserves, rng)
    if spec.kind == "lsp":
        return run_lsp(bids, spec.reserves, rng)
    if spec.kind == "asp":
        return run_asp(bids, spec.reserve, rng)
    if spec.kind == "spm":
        return run_spm(bids, spec.reserves)
    return run_myerson_example_one(bids, spec.params, rng)


# ---------- Vectorised revenue ----------

def _second_highest(x: np.ndarray) -> np.ndarray:
    if x.shape[1] < 2:
        return np.full(x.shape[0], -np.inf)
    return np.partition(x, -2, axis=1)[:, -2]


def _esp_batch(bids: np.ndarray, r: np.ndarray) -> np.ndarray:
    # tie-free: with tied top survivors, second == top >= any tied winner's reserve
    surviving = np.where(bids >= r, bids, -np.inf)
    w = np.argmax(surviving, axis=1)
    second = _second_highest(surviving)
    second = np.where(np.isfinite(second), second, 0.0)
    pay = np.maximum(r[w], second)
    return np.where(np.isfinite(surviving.max(axis=1)), pay, 0.0)


def _lsp_batch(bids: np.ndarray, r: np.ndarray, rng: Optional[np.random.Generator]) -> np.ndarray:
    rows = np.arange(bids.shape[0])
    top = bids.max(axis=1)
    is_top = bids == top[:, None]
    second = _second_highest(bids)
    second = np.where(np.isfinite(second), second, 0.0)
    if rng is not None:
        w = np.argmax(np.where(is_top, rng.random(bids.shape), -1.0), axis=1)
        return np.where(bids[rows, w] >= r[w], np.maximum(r[w], second), 0.0)

    w = np.argmax(bids, axis=1)
    unique_rev = np.where(bids[rows, w] >= r[w], np.maximum(r[w], second), 0.0)
    n_top = is_top.sum(axis=1)
    n_clear = (is_top & (bids >= r)).sum(axis=1)
    tied_rev = top * n_clear / n_top
    return np.where(n_top == 1, unique_rev, tied_rev)


def _spm_batch(bids: np.ndarray, p: np.ndarray) -> np.ndarray:
    # the first acceptor in descending price order holds the highest accepted price
    return np.where(bids >= p, p, 0.0).max(axis=1)


def _myerson_batch(bids: np.ndarray, params: ExampleOneParams) -> np.ndarray:
    mid, high = params.mid_value, params.high_value
    n_top = (bids >= high).sum(axis=1)
    n_mid = ((bids >= mid) & (bids < high)).sum(axis=1)
    single = high - (high - mid) / (1.0 + n_mid)
    return np.where(
        n_top >= 2, high, np.where(n_top == 1, single, np.where(n_mid >= 1, mid, 0.0))
    )


def batch_revenue(
    spec: MechanismSpec, bids: np.ndarray, rng: Optional[np.random.Generator] = None
) -> np.ndarray:
    """
    Revenue for each row of a (profiles x buyers) bid matrix. With rng=None the
    result is the expectation over uniform tie-breaking, otherwise ties are drawn.
    """
    bids = np.atleast_2d(np.asarray(bids, dtype=float))
    n = bids.shape[1]
    if spec.kind in ("esp", "asp"):
        return _esp_batch(bids, spec.reserves_array(n))
    if spec.kind == "lsp":
        return _lsp_batch(bids, spec.reserves_array(n), rng)
    if spec.kind == "spm":
        return _spm_batch(bids, spec.reserves_array(n))
    return _myerson_batch(bids, spec.params)


def esp_expected_utility(
    values: Sequence[float], bids: Sequence[float], reserves: Sequence[float], i: int
) -> float:
    """Buyer i's utility under ESP, averaged over uniform tie-breaking."""
    b = np.asarray(bids, dtype=float)
    r = np.asarray(reserves, dtype=float)
    survivors = np.nonzero(b >= r)[0]
    if i not in survivors:
        return 0.0
    top = b[survivors].max()
    tied = survivors[b[survivors] == top]
    if i not in tied:
        return 0.0
    others = b[survivors[survivors != i]]
    second = float(others.max()) if len(others) else 0.0
    return (values[i] - max(float(r[i]), second)) / len(tied)
