"""Fold-based special cases: cross-conformal, leave-one-out, and jackknife+.

Cross-conformal reuses the multi-split machinery with the B calibration sets
taken as the folds of a single random permutation. The leave-one-out set
fixes one calibration point per split at level 1/2, so each split threshold
is that point's own score. Jackknife+ builds one interval from order
statistics of the leave-one-out predictions shifted by their residuals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .aggregate import MultiSplitConfig, _merged_regions, aggregate_intervals, multi_split_set
from .conformal import invert_score_threshold
from .core import (
    Dataset,
    Interval,
    NumericalError,
    PredictionSet,
    SplitPlan,
    ValidationError,
)
from .scores import ABSOLUTE_RESIDUAL, FittedScore, ScoreSpec, calibration_scores, fit_score


@dataclass(frozen=True)
class FoldPlan:
    """Disjoint folds covering 0..n-1; sizes differ by at most one."""

    folds: tuple[tuple[int, ...], ...]

    def __post_init__(self) -> None:
        folds = tuple(tuple(int(i) for i in f) for f in self.folds)
        n = sum(len(f) for f in folds)
        if sorted(i for f in folds for i in f) != list(range(n)):
            raise ValidationError("folds must partition 0..n-1 exactly")
        sizes = {len(f) for f in folds}
        if len(sizes) > 1 and max(sizes) - min(sizes) > 1:
            raise ValidationError("fold sizes may differ by at most one")
        object.__setattr__(self, "folds", folds)

    @property
    def n(self) -> int:
        return sum(len(f) for f in self.folds)

    def to_split_plans(self) -> list[SplitPlan]:
        """One plan per fold: the fold calibrates, its complement trains."""
        all_idx = set(range(self.n))
        return [
            SplitPlan(
                train_idx=tuple(sorted(all_idx.difference(fold))),
                calib_idx=tuple(sorted(fold)),
            )
            for fold in self.folds
        ]


def make_folds(n: int, B: int, seed: int | np.random.SeedSequence) -> FoldPlan:
    """Split one PCG64 permutation of 0..n-1 into B consecutive chunks.

    The first n mod B folds receive one extra index.
    """
    if not 2 <= B <= n:
        raise ValidationError(f"need 2 <= B <= n, got B={B}, n={n}")
    perm = np.random.default_rng(seed).permutation(n)
    base, extra = divmod(n, B)
    folds, start = [], 0
    for b in range(B):
        size = base + (1 if b < extra else 0)
        folds.append(tuple(sorted(int(i) for i in perm[start : start + size])))
        start += size
    return FoldPlan(tuple(folds))


def cross_conformal_set(
    data: Dataset,
    B: int,
    spec: ScoreSpec,
    alpha: float,
    tau: float | Fraction,
    lam: int,
    seed: int,
    x_new: np.ndarray,
) -> PredictionSet:
    """Multi-split set whose splits are the complementary fold pairs of one permutation."""
    folds = make_folds(data.n, B, seed)
    config = MultiSplitConfig(
        B=B,
        tau=tau,
        lam=lam,
        alpha=alpha,
        per_split_m=[len(f) for f in folds.folds],
        per_split_score=spec,
        seed=seed,
    )
    return multi_split_set(data, config, x_new, plans=folds.to_split_plans())


@dataclass(frozen=True)
class LooRidgeModels:
    """All n leave-one-out ridge fits in augmented (intercept, slopes) form."""

    thetas: np.ndarray  # (n, d+1); row i solves the fit without row i
    residuals: np.ndarray  # (n,) |y_i - mu_{-i}(x_i)|


def fit_loo_ridge(X: np.ndarray, y: np.ndarray, penalty: float) -> LooRidgeModels:
    """Fit the n leave-one-out ridge models by downdating one shared Gram matrix.

    The augmented system [1 X]^T [1 X] theta = [1 X]^T y (intercept
    unpenalized) is assembled once; dropping row i subtracts a rank-one term
    before each solve. Equivalent to fit_ridge on the n-1 remaining rows.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, d = X.shape
    if n < 2:
        raise ValidationError("leave-one-out needs at least 2 rows")
    if penalty < 0:
        raise ValidationError(f"penalty must be >= 0, got {penalty}")
    Z = np.hstack([np.ones((n, 1)), X])
    gram = Z.T @ Z
    zty = Z.T @ y
    reg = penalty * np.eye(d + 1)
    reg[0, 0] = 0.0
    thetas = np.empty((n, d + 1))
    for i in range(n):
        z = Z[i]
        try:
            thetas[i] = cho_solve(cho_factor(gram - np.outer(z, z) + reg), zty - y[i] * z)
        except LinAlgError as e:
            raise NumericalError(
                f"leave-one-out ridge system without row {i} is singular"
            ) from e
    residuals = np.abs(y - np.einsum("ij,ij->i", Z, thetas))
    return LooRidgeModels(thetas=thetas, residuals=residuals)


def loo_predictions(models: LooRidgeModels, X: np.ndarray) -> np.ndarray:
    """Matrix of mu_{-i}(x) values, shape (n, len(X))."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return models.thetas @ np.hstack([np.ones((X.shape[0], 1)), X]).T


def _loo_vote_threshold(alpha: float, n: int) -> int:
    # membership needs strictly more than alpha*(n+1) - 1 of the n votes
    return math.floor(Fraction(alpha) * (n + 1) - 1) + 1


def loo_conformal_batch(
    data: Dataset, spec: ScoreSpec, alpha: float, X_query: np.ndarray
) -> list[PredictionSet]:
    """Leave-one-out conformal sets for several query points, fitting n models once.

    Each of the n splits calibrates on a single held-out point at level 1/2,
    which sits exactly at the quantile-index boundary: the threshold is the
    point's own score. A point of the real line is kept when contained in
    strictly more than alpha*(n+1) - 1 of the n split sets; for
    alpha*(n+1) < 1 that threshold is negative and the set is the whole line.
    Coverage is at least 1 - 2*alpha.
    """
    if not 0 < alpha < 1:
        raise ValidationError(f"alpha={alpha} must lie in (0, 1)")
    n = data.n
    if n < 2:
        raise ValidationError("leave-one-out needs at least 2 rows")
    X_query = np.atleast_2d(np.asarray(X_query, dtype=float))
    min_count = _loo_vote_threshold(alpha, n)
    meta = {"min_count": min_count}
    if min_count <= 0:
        return [PredictionSet.whole_line(meta=dict(meta)) for _ in X_query]
    if spec.kind == ABSOLUTE_RESIDUAL:
        models = fit_loo_ridge(
            data.features, data.response, float(spec.learner_config.get("penalty", 0.0))
        )
        preds = loo_predictions(models, X_query)  # (n, n_query)
        out = []
        for t in range(X_query.shape[0]):
            bounds = list(
                zip(preds[:, t] - models.residuals, preds[:, t] + models.residuals)
            )
            out.append(
                PredictionSet(
                    tuple(Interval(lo, hi) for lo, hi in _merged_regions(bounds, min_count)),
                    meta=dict(meta),
                )
            )
        return out
    fits: list[tuple[FittedScore, float]] = []
    for i in range(n):
        plan = SplitPlan(train_idx=tuple(j for j in range(n) if j != i), calib_idx=(i,))
        fs = fit_score(data, plan, spec)
        fits.append((fs, float(calibration_scores(data, plan, fs)[0])))
    out = []
    for x in X_query:
        sets = [invert_score_threshold(fs, x, r_i) for fs, r_i in fits]
        agg = aggregate_intervals(sets, min_count)
        out.append(PredictionSet(agg.intervals, meta=dict(meta)))
    return out


def loo_conformal_set(
    data: Dataset, spec: ScoreSpec, alpha: float, x_new: np.ndarray
) -> PredictionSet:
    """Leave-one-out conformal set at a single query point; see loo_conformal_batch."""
    return loo_conformal_batch(data, spec, alpha, np.asarray(x_new)[None, :])[0]


def _jackknife_interval(
    minus_vals: np.ndarray, plus_vals: np.ndarray, alpha: float
) -> PredictionSet:
    """Interval from the floor(alpha(n+1))-th smallest lower value and the
    ceil((1-alpha)(n+1))-th smallest upper value; infinite when degenerate."""
    n = minus_vals.shape[0]
    alpha_f = Fraction(alpha)
    lo_idx = math.floor(alpha_f * (n + 1))
    hi_idx = math.ceil((1 - alpha_f) * (n + 1))
    lo = -math.inf if lo_idx < 1 else float(np.sort(minus_vals)[lo_idx - 1])
    hi = math.inf if hi_idx > n else float(np.sort(plus_vals)[hi_idx - 1])
    meta = {"lo_index": lo_idx, "hi_index": hi_idx}
    if lo > hi:  # only reachable for alpha > 1/2
        return PredictionSet.empty(meta=meta)
    return PredictionSet((Interval(lo, hi),), meta=meta)


def jackknife_plus_batch(
    data: Dataset, alpha: float, X_query: np.ndarray, penalty: float = 0.0
) -> list[PredictionSet]:
    """Jackknife+ intervals for several query points, fitting n models once."""
    if not 0 < alpha < 1:
        raise ValidationError(f"alpha={alpha} must lie in (0, 1)")
    X_query = np.atleast_2d(np.asarray(X_query, dtype=float))
    models = fit_loo_ridge(data.features, data.response, penalty)
    preds = loo_predictions(models, X_query)
    minus = preds - models.residuals[:, None]
    plus = preds + models.residuals[:, None]
    return [
        _jackknife_interval(minus[:, t], plus[:, t], alpha)
        for t in range(X_query.shape[0])
    ]


def jackknife_plus_interval(
    data: Dataset, alpha: float, x_new: np.ndarray, penalty: float = 0.0
) -> PredictionSet:
    """Jackknife+ interval for the ridge absolute-residual score.

    Always contains the leave-one-out conformal set at the same alpha and
    inherits its 1 - 2*alpha coverage guarantee.
    """
    return jackknife_plus_batch(data, alpha, np.asarray(x_new)[None, :], penalty)[0]
