"""Conformity scores: absolute residual and quantile-band (CQR) variants.

A score measures how implausible a candidate response y is at a point x,
given learners fitted on the training part of a split only. Low score means
plausible. Scores must be real numbers; a learner returning NaN is an error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from types import MappingProxyType
from typing import Any, Mapping

import numpy as np

from .core import Dataset, NumericalError, SplitPlan, ValidationError
from .learners import (
    KnnQuantileModel,
    RidgeModel,
    fit_ridge,
    predict_point,
    predict_point_batch,
    predict_quantile,
    predict_quantile_batch,
)

ABSOLUTE_RESIDUAL = "absolute_residual"
CQR = "cqr"


@dataclass(frozen=True)
class ScoreSpec:
    """Choice of conformity score plus opaque learner settings.

    learner_config keys:
      absolute_residual: "penalty" (ridge penalty, default 0.0)
      cqr:               "k" (neighbor count, default ceil(sqrt(train size)))
    """

    kind: str = ABSOLUTE_RESIDUAL
    gamma: float | None = None
    learner_config: Mapping[str, Any] = MappingProxyType({})

    def __post_init__(self) -> None:
        if self.kind not in (ABSOLUTE_RESIDUAL, CQR):
            raise ValidationError(f"unknown score kind {self.kind!r}")
        if self.kind == CQR:
            if self.gamma is None or not 0.0 < self.gamma <= 0.5:
                raise ValidationError("cqr requires gamma in (0, 1/2]")
        elif self.gamma is not None:
            raise ValidationError("gamma is only meaningful for the cqr score")
        object.__setattr__(self, "learner_config", MappingProxyType(dict(self.learner_config)))


@dataclass(frozen=True)
class FittedScore:
    """Learners trained on the training part of one split."""

    spec: ScoreSpec
    point_model: RidgeModel | None = None
    lower_model: KnnQuantileModel | None = None
    upper_model: KnnQuantileModel | None = None

    def __post_init__(self) -> None:
        if self.spec.kind == ABSOLUTE_RESIDUAL:
            if self.point_model is None:
                raise ValidationError("absolute_residual needs a point model")
        else:
            if self.lower_model is None or self.upper_model is None:
                raise ValidationError("cqr needs lower and upper quantile models")


def fit_score(data: Dataset, plan: SplitPlan, spec: ScoreSpec) -> FittedScore:
    """Train the score's learner(s) on the plan's training rows only."""
    if plan.n != data.n:
        raise ValidationError(f"plan covers {plan.n} rows, dataset has {data.n}")
    train = data.subset(plan.train_idx)
    if spec.kind == ABSOLUTE_RESIDUAL:
        penalty = float(spec.learner_config.get("penalty", 0.0))
        return FittedScore(spec, point_model=fit_ridge(train, penalty))
    k = int(spec.learner_config.get("k", math.ceil(math.sqrt(train.n))))
    lower = KnnQuantileModel(train.features, train.response, k=k, level=spec.gamma)
    upper = KnnQuantileModel(train.features, train.response, k=k, level=1.0 - spec.gamma)
    return FittedScore(spec, lower_model=lower, upper_model=upper)


def _check_finite(value: float, what: str) -> float:
    if math.isnan(value) or math.isinf(value):
        raise NumericalError(f"{what} returned non-finite value {value}")
    return value


def score_one(fs: FittedScore, x: np.ndarray, y: float) -> float:
    """Conformity score of the candidate pair (x, y).

    absolute_residual: |y - mu(x)|. cqr: max of the two signed distances to
    the quantile band, negative when y lies strictly inside it.
    """
    if fs.spec.kind == ABSOLUTE_RESIDUAL:
        mu = _check_finite(predict_point(fs.point_model, x), "point learner")
        return abs(y - mu)
    lo = _check_finite(predict_quantile(fs.lower_model, x), "lower quantile learner")
    hi = _check_finite(predict_quantile(fs.upper_model, x), "upper quantile learner")
    return max(lo - y, y - hi)


def calibration_scores(data: Dataset, plan: SplitPlan, fs: FittedScore) -> np.ndarray:
    """Score vector over the plan's calibration rows, in calibration order."""
    if plan.n != data.n:
        raise ValidationError(f"plan covers {plan.n} rows, dataset has {data.n}")
    calib = data.subset(plan.calib_idx)
    if fs.spec.kind == ABSOLUTE_RESIDUAL:
        mu = predict_point_batch(fs.point_model, calib.features)
        scores = np.abs(calib.response - mu)
    else:
        lo = predict_quantile_batch(fs.lower_model, calib.features)
        hi = predict_quantile_batch(fs.upper_model, calib.features)
        scores = np.maximum(lo - calib.response, calib.response - hi)
    if not np.isfinite(scores).all():
        raise NumericalError("calibration produced non-finite scores")
    return scores
