"""Multi-split conformal prediction by threshold voting over B data splits.

Each of B random splits yields a single-split set at a deflated level beta.
A point belongs to the aggregated set when strictly more than a tau fraction
of the split sets contain it; a smoothed Markov bound on the vote count
calibrates beta so that marginal coverage is at least 1 - alpha.

The vote threshold is an integer event, so the calculus runs on exact
rationals: k = B - floor(tau*B) excluding splits mean non-membership, and
beta = alpha*(k + lambda)/B. When tau*B is an integer this equals the
textbook level alpha*(1 - tau + lambda/B); otherwise it is the tighter
level implied by the integer threshold. Pass tau as a fractions.Fraction
to keep boundary configurations (tau = 1 - 1/B, tau = (B-1)/(2B)) exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .conformal import ConformalQuantile, conformal_quantile, invert_score_threshold
from .core import (
    Dataset,
    Interval,
    MultiSplitError,
    PredictionSet,
    SplitPlan,
    ValidationError,
    _plans_for_sizes,
)
from .scores import FittedScore, ScoreSpec, calibration_scores, fit_score


class SplitComputationError(MultiSplitError):
    """A single split failed inside a multi-split computation."""


def _derived_levels(
    alpha: float | Fraction, tau: float | Fraction, lam: int, B: int
) -> tuple[int, int, Fraction]:
    """(k, min_count, beta) from the voting parameters, in exact arithmetic."""
    if B < 1:
        raise ValidationError(f"B={B} must be >= 1")
    if not isinstance(lam, int) or lam < 0:
        raise ValidationError(f"smoothing parameter lambda={lam} must be a non-negative integer")
    alpha_f = Fraction(alpha)
    if not 0 < alpha_f < 1:
        raise ValidationError(f"alpha={alpha} must lie in (0, 1)")
    tau_f = Fraction(tau)
    if not 0 <= tau_f <= Fraction(B - 1, B):
        raise ValidationError(f"tau={tau} must lie in [0, (B-1)/B] for B={B}")
    floor_tb = math.floor(tau_f * B)
    k = B - floor_tb
    min_count = floor_tb + 1
    beta = alpha_f * (k + lam) / B
    if not 0 < beta < 1:
        raise ValidationError(
            f"per-split level beta={float(beta):.6g} falls outside (0, 1); "
            f"reduce lambda or alpha"
        )
    return k, min_count, beta


def per_split_level(
    alpha: float | Fraction, tau: float | Fraction, lam: int, B: int
) -> float:
    """Level beta at which each of the B split sets is built."""
    return float(_derived_levels(alpha, tau, lam, B)[2])


def markov_bound(B: int, beta: float, k: int, lam: int = 0) -> float:
    """Upper bound B*beta/(k+lambda) on the chance of >= k excluding splits, capped at 1."""
    if k < 1:
        raise ValidationError(f"k={k} must be >= 1")
    return min(1.0, B * beta / (k + lam))


@dataclass(frozen=True)
class MultiSplitConfig:
    """Voting parameters plus per-split calibration sizes and score choices.

    per_split_m and per_split_score accept a single value, broadcast to all
    B splits, or one entry per split.

    lam > 0 sharpens the Markov bound only under an assumption on the vote
    distribution that cannot be verified at prediction time; choosing a
    positive lam is the caller's assertion. check_lambda_condition evaluates
    the assumption on a known (simulated) vote distribution.
    """

    B: int
    tau: float | Fraction
    lam: int
    alpha: float
    per_split_m: int | Sequence[int]
    per_split_score: ScoreSpec | Sequence[ScoreSpec]
    seed: int

    def __post_init__(self) -> None:
        _derived_levels(self.alpha, self.tau, self.lam, self.B)
        ms = self.per_split_m
        ms = (int(ms),) * self.B if np.isscalar(ms) else tuple(int(m) for m in ms)
        specs = self.per_split_score
        specs = (specs,) * self.B if isinstance(specs, ScoreSpec) else tuple(specs)
        if len(ms) != self.B or len(specs) != self.B:
            raise ValidationError("per-split settings must have one entry per split")
        object.__setattr__(self, "per_split_m", ms)
        object.__setattr__(self, "per_split_score", specs)

    @property
    def k(self) -> int:
        return _derived_levels(self.alpha, self.tau, self.lam, self.B)[0]

    @property
    def min_count(self) -> int:
        return _derived_levels(self.alpha, self.tau, self.lam, self.B)[1]

    @property
    def beta(self) -> float:
        return per_split_level(self.alpha, self.tau, self.lam, self.B)


_OPEN, _CLOSE = 0, 1  # opens sort before closes so shared endpoints stay covered


def _merged_regions(
    bounds: Sequence[tuple[float, float]], min_count: int
) -> list[tuple[float, float]]:
    """Maximal regions covered by at least min_count of the closed intervals."""
    events = []
    for lo, hi in bounds:
        events.append((lo, _OPEN))
        events.append((hi, _CLOSE))
    events.sort()
    regions: list[tuple[float, float]] = []
    count = 0
    start: float | None = None
    i, n_ev = 0, len(events)
    while i < n_ev:
        x = events[i][0]
        opens = closes = 0
        while i < n_ev and events[i][0] == x:
            if events[i][1] == _OPEN:
                opens += 1
            else:
                closes += 1
            i += 1
        at = count + opens
        after = at - closes
        if start is None and at >= min_count:
            start = x
        if start is not None and after < min_count:
            regions.append((start, x))
            start = None
        count = after
    return regions


def aggregate_intervals(sets: Sequence[PredictionSet], min_count: int) -> PredictionSet:
    """Maximal set of points contained in at least min_count of the inputs.

    Endpoint sweep in O(B log B): interval bounds become open/close events,
    opens ordered before closes at equal coordinates (closed-interval
    semantics), and a counter sweep emits the covered regions. Empty inputs
    contribute no votes; unbounded ones vote everywhere they extend.
    """
    if not 1 <= min_count <= len(sets):
        raise ValidationError(
            f"min_count={min_count} must lie in [1, {len(sets)}]"
        )
    bounds = [(iv.lo, iv.hi) for s in sets for iv in s.intervals]
    return PredictionSet(
        tuple(Interval(lo, hi) for lo, hi in _merged_regions(bounds, min_count))
    )


@dataclass(frozen=True)
class FittedMultiSplit:
    """All B split models and thresholds, fitted once, reusable across queries."""

    config: MultiSplitConfig
    plans: tuple[SplitPlan, ...]
    fitted_scores: tuple[FittedScore, ...]
    quantiles: tuple[ConformalQuantile, ...]
    min_count: int
    k: int


def fit_multi_split(
    data: Dataset,
    config: MultiSplitConfig,
    plans: Sequence[SplitPlan] | None = None,
) -> FittedMultiSplit:
    """Fit every split's learner and calibration threshold at level beta.

    Splits are drawn from config.seed unless explicit plans are injected
    (cross-conformal folds, tests). A failure in any split aborts with the
    failing split index.
    """
    k, min_count, beta = _derived_levels(config.alpha, config.tau, config.lam, config.B)
    if plans is None:
        plans = _plans_for_sizes(data.n, config.per_split_m, config.seed)
    else:
        if len(plans) != config.B:
            raise ValidationError(f"expected {config.B} plans, got {len(plans)}")
        for b, plan in enumerate(plans):
            if plan.n != data.n or plan.m != config.per_split_m[b]:
                raise ValidationError(f"plan {b} does not match dataset/config sizes")
    fitted, quantiles = [], []
    for b, plan in enumerate(plans):
        try:
            fs = fit_score(data, plan, config.per_split_score[b])
            quantiles.append(conformal_quantile(calibration_scores(data, plan, fs), beta))
            fitted.append(fs)
        except Exception as e:
            raise SplitComputationError(f"split {b} failed: {e}") from e
    return FittedMultiSplit(
        config=config,
        plans=tuple(plans),
        fitted_scores=tuple(fitted),
        quantiles=tuple(quantiles),
        min_count=min_count,
        k=k,
    )


def multi_split_predict(fitted: FittedMultiSplit, x_new: np.ndarray) -> PredictionSet:
    """Aggregated set at one query point from already-fitted split models."""
    sets = []
    for b, (fs, q) in enumerate(zip(fitted.fitted_scores, fitted.quantiles)):
        try:
            sets.append(invert_score_threshold(fs, x_new, q.value))
        except Exception as e:
            raise SplitComputationError(f"split {b} failed: {e}") from e
    out = aggregate_intervals(sets, fitted.min_count)
    return PredictionSet(
        out.intervals,
        meta={
            "beta": fitted.quantiles[0].alpha,
            "k": fitted.k,
            "min_count": fitted.min_count,
        },
    )


def multi_split_set(
    data: Dataset,
    config: MultiSplitConfig,
    x_new: np.ndarray,
    plans: Sequence[SplitPlan] | None = None,
) -> PredictionSet:
    """Aggregated prediction set at the query point.

    Membership in the result is equivalent to being contained in strictly
    more than tau*B of the B level-beta split sets.
    """
    return multi_split_predict(fit_multi_split(data, config, plans), x_new)


def check_lambda_condition(pmf: Sequence[float], k: int, lam: int) -> bool:
    """Evaluate the vote-distribution condition that licenses smoothing lambda.

    pmf[j] is the probability of exactly j excluding splits, j = 0..B. True iff
    sum_{u=0}^{k-1} pr(V in [k-u, k)) >= sum_{u=0}^{lam} pr(V in [k, k+u)).
    Diagnostic only: at prediction time the condition concerns an unknown
    distribution and is asserted by the caller who picks lambda > 0.
    """
    p = np.asarray(pmf, dtype=float)
    B = p.shape[0] - 1
    if B < 1 or p.ndim != 1:
        raise ValidationError("pmf must list probabilities for V = 0..B with B >= 1")
    if (p < 0).any() or abs(float(p.sum()) - 1.0) > 1e-9:
        raise ValidationError("pmf entries must be non-negative and sum to 1")
    if not 1 <= k <= B:
        raise ValidationError(f"k={k} must lie in [1, B={B}]")
    if lam < 0:
        raise ValidationError(f"lambda={lam} must be >= 0")
    lhs = sum(float(p[k - u : k].sum()) for u in range(k))
    rhs = sum(float(p[k : min(k + u, B + 1)].sum()) for u in range(lam + 1))
    return lhs >= rhs


def _vote_measure_batch(los: np.ndarray, his: np.ndarray, min_count: int) -> np.ndarray:
    """Lebesgue measure of the >= min_count vote region, one query per column.

    los/his are (B, T) closed-interval endpoints (may be infinite). Stable
    sort keeps open events (stacked first) ahead of close events at equal
    coordinates; tie order cannot change a measure, only zero-length points.
    """
    B, T = los.shape
    if not 1 <= min_count <= B:
        raise ValidationError(f"min_count={min_count} must lie in [1, {B}]")
    ends = np.concatenate([los, his], axis=0)
    steps = np.concatenate([np.ones((B, T)), -np.ones((B, T))], axis=0)
    order = np.argsort(ends, axis=0, kind="stable")
    ev = np.take_along_axis(ends, order, axis=0)
    counts = np.cumsum(np.take_along_axis(steps, order, axis=0), axis=0)
    with np.errstate(invalid="ignore"):  # inf - inf at repeated infinite endpoints
        gaps = ev[1:] - ev[:-1]
    gaps[ev[1:] == ev[:-1]] = 0.0
    return np.where(counts[:-1] >= min_count, gaps, 0.0).sum(axis=0)
