"""
Revenue curves in quantile space and their ironing.

The revenue curve of a discrete distribution is R(q) = q * F^-1(1 - q). Its
breakpoints sit at the tail probabilities P(v >= s). Ironing replaces R by its
upper concave envelope (monotone chain over the breakpoints); the slope of
the envelope segment covering a value's quantile interval is that value's
ironed virtual value.
"""

from __future__ import annotations

import logging
from typing import Dict, List, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, model_validator

from src.dist_core import DiscreteDistribution, tail_probabilities

logger = logging.getLogger(__name__)

COLLINEAR_TOL = 1e-12

Point = Tuple[float, float]


class RevenueCurve(BaseModel):
    model_config = ConfigDict(frozen=True)

    breakpoints: Tuple[Point, ...]
    # value priced on each interval (q_{j-1}, q_j], one per interval
    segment_value: Tuple[float, ...]
    # (value, segment index) for atoms whose interval rounds to zero width
    absorbed: Tuple[Tuple[float, int], ...] = ()

    @model_validator(mode="after")
    def _check(self) -> "RevenueCurve":
        pts = self.breakpoints
        if len(pts) < 2 or pts[0] != (0.0, 0.0):
            raise ValueError("revenue curve must start at (0, 0) and have an interval")
        if pts[-1][0] != 1.0:
            raise ValueError(f"revenue curve must end at q = 1, got q = {pts[-1][0]}")
        qs = [q for q, _ in pts]
        if any(b <= a for a, b in zip(qs, qs[1:])):
            raise ValueError("revenue curve quantiles must be strictly ascending")
        if len(self.segment_value) != len(pts) - 1:
            raise ValueError("one segment value per quantile interval is required")
        if any(not 0 <= seg < len(self.segment_value) for _, seg in self.absorbed):
            raise ValueError("absorbed atoms must point at an existing interval")
        return self

    @property
    def q(self) -> np.ndarray:
        return np.array([p[0] for p in self.breakpoints])

    @property
    def r(self) -> np.ndarray:
        return np.array([p[1] for p in self.breakpoints])


class IronedCurve(BaseModel):
    model_config = ConfigDict(frozen=True)

    curve: RevenueCurve
    hull_indices: Tuple[int, ...]
    hull_points: Tuple[Point, ...]
    hull_slopes: Tuple[float, ...]
    ironed_value_of: Dict[float, float]

    def to_frame(self) -> pd.DataFrame:
        """phi-bar table, highest value first."""
        rows = []
        for j, value in enumerate(self.curve.segment_value):
            q_lo, r_lo = self.curve.breakpoints[j]
            q_hi, r_hi = self.curve.breakpoints[j + 1]
            rows.append(
                {
                    "value": value,
                    "q_low": q_lo,
                    "q_high": q_hi,
                    "revenue_at_q_high": r_hi,
                    "ironed_virtual_value": self.ironed_value_of[value],
                }
            )
        for value, seg in self.curve.absorbed:
            # zero-width interval at the edge of the interval it shares
            edge = seg if value > self.curve.segment_value[seg] else seg + 1
            q = self.curve.breakpoints[edge][0]
            rows.append(
                {
                    "value": value,
                    "q_low": q,
                    "q_high": q,
                    "revenue_at_q_high": q * value,
                    "ironed_virtual_value": self.ironed_value_of[value],
                }
            )
        return pd.DataFrame(rows).sort_values("value", ascending=False, ignore_index=True)


def revenue_curve(dist: DiscreteDistribution) -> RevenueCurve:
    """
    Breakpoints from the highest value down. An atom too light to move its tail
    probability in double precision gets no breakpoint of its own; it shares
    the next interval below it in value, or the last interval at q = 1.
    """
    tails = tail_probabilities(dist)
    points: List[Point] = [(0.0, 0.0)]
    values: List[float] = []
    absorbed: List[Tuple[float, int]] = []
    pending: List[float] = []
    for j in range(dist.size - 1, -1, -1):
        q = float(tails[j])
        s = dist.support[j]
        if q <= points[-1][0]:
            pending.append(s)
            continue
        points.append((q, q * s))
        values.append(s)
        absorbed.extend((v, len(values) - 1) for v in pending)
        pending = []
    absorbed.extend((v, len(values) - 1) for v in pending)
    if absorbed:
        logger.debug("absorbed %d zero-width atoms into neighbouring intervals", len(absorbed))
    return RevenueCurve(
        breakpoints=tuple(points), segment_value=tuple(values), absorbed=tuple(absorbed)
    )


def _cross(o: Point, a: Point, b: Point) -> Tuple[float, float]:
    lhs = (a[0] - o[0]) * (b[1] - o[1])
    rhs = (a[1] - o[1]) * (b[0] - o[0])
    return lhs - rhs, abs(lhs) + abs(rhs)


def _upper_hull(points: Tuple[Point, ...]) -> List[int]:
    hull: List[int] = []
    for i, p in enumerate(points):
        # pop while the last vertex lies on or below the chord to p
        while len(hull) >= 2:
            cross, scale = _cross(points[hull[-2]], points[hull[-1]], p)
            if cross >= -COLLINEAR_TOL * scale:
                hull.pop()
            else:
                break
        hull.append(i)
    return hull


def iron(curve: RevenueCurve) -> IronedCurve:
    pts = curve.breakpoints
    hull = _upper_hull(pts)
    slopes = []
    for a, b in zip(hull, hull[1:]):
        (qa, ra), (qb, rb) = pts[a], pts[b]
        slopes.append((rb - ra) / (qb - qa))

    ironed: Dict[float, float] = {}
    k = 0
    for j, value in enumerate(curve.segment_value):
        # interval (j, j+1) lies inside hull segment k
        while hull[k + 1] < j + 1:
            k += 1
        ironed[value] = slopes[k]
    for value, seg in curve.absorbed:
        ironed[value] = ironed[curve.segment_value[seg]]

    logger.debug("ironed %d breakpoints down to %d hull vertices", len(pts), len(hull))
    return IronedCurve(
        curve=curve,
        hull_indices=tuple(hull),
        hull_points=tuple(pts[i] for i in hull),
        hull_slopes=tuple(slopes),
        ironed_value_of=ironed,
    )


def ironed_virtual_values(dist: DiscreteDistribution) -> Dict[float, float]:
    return iron(revenue_curve(dist)).ironed_value_of


def envelope_at(ironed: IronedCurve, q) -> np.ndarray:
    hq = np.array([p[0] for p in ironed.hull_points])
    hr = np.array([p[1] for p in ironed.hull_points])
    return np.interp(q, hq, hr)


def brute_force_envelope(curve: RevenueCurve) -> np.ndarray:
    """Concave envelope at each breakpoint as the max over all chords; O(k^3)."""
    q, r = curve.q, curve.r
    k = len(q)
    env = r.copy()
    for t in range(k):
        for i in range(t + 1):
            for j in range(t, k):
                if i == j:
                    continue
                w = (q[t] - q[i]) / (q[j] - q[i])
                env[t] = max(env[t], r[i] + w * (r[j] - r[i]))
    return env


def is_regular(dist: DiscreteDistribution) -> bool:
    """True when the revenue curve is already concave (no ironing needed)."""
    curve = revenue_curve(dist)
    ironed = iron(curve)
    return bool(np.allclose(envelope_at(ironed, curve.q), curve.r, rtol=1e-12, atol=1e-15))
