"""Independent oracles shared by the unit and acceptance tests.

Everything here deliberately avoids the library's sweep/quantile code paths:
the vote-counting oracle probes membership pointwise, which is enough to pin
down a piecewise-constant count function exactly.
"""

from __future__ import annotations

import math

import numpy as np

from multisplit import Interval, PredictionSet

FAR = 1e18  # stands in for +/- infinity when probing unbounded behavior


def count_membership(sets, y: float) -> int:
    """Number of input sets containing y, by direct interval checks."""
    return sum(any(iv.lo <= y <= iv.hi for iv in s.intervals) for s in sets)


def probe_points(sets) -> list[float]:
    """All endpoints, midpoints of consecutive endpoints, and far-out probes.

    The aggregate count only changes at endpoints, so agreement on these
    points pins down the aggregated set exactly.
    """
    finite = sorted(
        {iv.lo for s in sets for iv in s.intervals if math.isfinite(iv.lo)}
        | {iv.hi for s in sets for iv in s.intervals if math.isfinite(iv.hi)}
    )
    pts = list(finite)
    pts.extend((a + b) / 2 for a, b in zip(finite, finite[1:]) if a != b)
    if finite:
        pts.extend([finite[0] - 1.0, finite[-1] + 1.0])
    pts.extend([-FAR, FAR])
    return pts


def assert_aggregate_matches_oracle(sets, min_count: int, result: PredictionSet) -> None:
    for y in probe_points(sets):
        expected = count_membership(sets, y) >= min_count
        actual = result.contains(y)
        assert actual == expected, (
            f"membership mismatch at y={y}: oracle {expected}, result {actual} "
            f"(min_count={min_count})"
        )


def random_prediction_set(rng: np.random.Generator) -> PredictionSet:
    """Random set: sometimes empty, sometimes unbounded, sometimes several pieces."""
    roll = rng.random()
    if roll < 0.10:
        return PredictionSet.empty()
    if roll < 0.18:
        return PredictionSet.whole_line()
    intervals = []
    for _ in range(rng.integers(1, 4)):
        lo = float(rng.normal(scale=5.0))
        hi = lo + float(rng.exponential(2.0))
        if rng.random() < 0.08:
            lo = -math.inf
        if rng.random() < 0.08:
            hi = math.inf
        intervals.append(Interval(lo, hi))
    return PredictionSet.from_intervals(intervals)
