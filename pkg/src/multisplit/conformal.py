"""Single-split conformal prediction.

The calibration quantile is the ceil((1-alpha)(m+1))-th order statistic of
the m calibration scores; when that index exceeds m the threshold is +inf
and the prediction set is the whole real line. Set construction inverts the
score analytically (closed form), never by grid search.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .core import Dataset, Interval, PredictionSet, SplitPlan, ValidationError
from .learners import predict_point, predict_quantile
from .scores import ABSOLUTE_RESIDUAL, FittedScore, ScoreSpec, calibration_scores, fit_score


@dataclass(frozen=True)
class ConformalQuantile:
    """Calibration threshold: value is +inf when index > m (degenerate regime)."""

    value: float
    index: int
    m: int
    alpha: float


def quantile_index(alpha: float | Fraction, m: int) -> int:
    """ceil((1-alpha)(m+1)), evaluated exactly for the given alpha."""
    return math.ceil((1 - Fraction(alpha)) * (m + 1))


def conformal_quantile(scores: np.ndarray, alpha: float | Fraction) -> ConformalQuantile:
    """Order-statistic threshold of a calibration score vector.

    Ties keep calibration order (stable sort); the threshold value does not
    depend on the tie rule.
    """
    if not 0 < alpha < 1:
        raise ValidationError(f"alpha={alpha} must lie in (0, 1)")
    scores = np.asarray(scores, dtype=float)
    m = scores.shape[0]
    if m < 1:
        raise ValidationError("need at least one calibration score")
    idx = quantile_index(alpha, m)
    if idx > m:
        value = math.inf
    else:
        value = float(np.sort(scores, kind="stable")[idx - 1])
    return ConformalQuantile(value=value, index=idx, m=m, alpha=float(alpha))


def invert_score_threshold(fs: FittedScore, x: np.ndarray, r: float) -> PredictionSet:
    """Closed-form {y : score(x, y) <= r} for the supported score kinds."""
    if math.isinf(r):
        return PredictionSet.whole_line(meta={"threshold": r})
    if fs.spec.kind == ABSOLUTE_RESIDUAL:
        center = predict_point(fs.point_model, x)
        return PredictionSet(
            (Interval(center - r, center + r),),
            meta={"threshold": r, "center": center},
        )
    lo_hat = predict_quantile(fs.lower_model, x)
    hi_hat = predict_quantile(fs.upper_model, x)
    meta = {"threshold": r, "lower": lo_hat, "upper": hi_hat}
    lo, hi = lo_hat - r, hi_hat + r
    if lo > hi:
        return PredictionSet.empty(meta=meta)
    return PredictionSet((Interval(lo, hi),), meta=meta)


def split_conformal_set(
    data: Dataset,
    plan: SplitPlan,
    spec: ScoreSpec,
    alpha: float | Fraction,
    x_new: np.ndarray,
) -> PredictionSet:
    """Level-alpha split conformal prediction set at the query point."""
    fs = fit_score(data, plan, spec)
    q = conformal_quantile(calibration_scores(data, plan, fs), alpha)
    s = invert_score_threshold(fs, x_new, q.value)
    s.meta["quantile"] = q
    return s
