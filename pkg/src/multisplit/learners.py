"""Point and quantile regressors used inside conformity scores.

Ridge regression follows the centered convention: feature columns and the
response are mean-centered on the training fold, slopes are penalized, and
the unpenalized intercept equals the training response mean.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .core import Dataset, NumericalError, ValidationError


@dataclass(frozen=True)
class RidgeModel:
    coefficients: np.ndarray
    intercept: float
    feature_means: np.ndarray
    response_mean: float
    penalty: float


@dataclass(frozen=True)
class KnnQuantileModel:
    """Empirical quantile of the responses of the k nearest training points."""

    train_features: np.ndarray
    train_response: np.ndarray
    k: int
    level: float

    def __post_init__(self) -> None:
        if not 1 <= self.k <= len(self.train_response):
            raise ValidationError(f"k={self.k} must lie in [1, {len(self.train_response)}]")
        if not 0.0 < self.level < 1.0:
            raise ValidationError(f"quantile level {self.level} must lie in (0, 1)")


def largest_singular_value(X: np.ndarray, tol: float = 1e-12, max_iter: int = 10_000) -> float:
    """Largest singular value of X by power iteration on the smaller Gram matrix.

    Relative accuracy is well below 1e-6 for any matrix without pathologically
    close leading singular values; an all-zero matrix returns 0.
    """
    X = np.asarray(X, dtype=float)
    if X.size == 0:
        raise ValidationError("matrix must be non-empty")
    if not np.any(X):
        return 0.0
    n, d = X.shape
    G = X.T @ X if d <= n else X @ X.T
    # Fixed-seed start vector; restart if the iterate collapses (start vector
    # orthogonal to the leading eigenspace).
    for attempt in range(4):
        v = np.random.default_rng(attempt).standard_normal(G.shape[0])
        norm = np.linalg.norm(v)
        v /= norm
        prev = 0.0
        for _ in range(max_iter):
            w = G @ v
            lam = float(v @ w)
            norm = np.linalg.norm(w)
            if norm <= 1e-300:
                break
            v = w / norm
            if lam > 0 and abs(lam - prev) <= tol * lam:
                return math.sqrt(lam)
            prev = lam
        else:
            return math.sqrt(prev)
    raise NumericalError("power iteration failed to converge")


def fit_ridge(train: Dataset, penalty: float) -> RidgeModel:
    """Centered ridge fit via Cholesky on the regularized d x d Gram matrix.

    With penalty 0 a singular system raises NumericalError instead of being
    silently regularized.
    """
    if penalty < 0:
        raise ValidationError(f"penalty must be >= 0, got {penalty}")
    X, y = train.features, train.response
    x_means = X.mean(axis=0)
    y_mean = float(y.mean())
    Xc = X - x_means
    yc = y - y_mean
    G = Xc.T @ Xc + penalty * np.eye(train.d)
    rhs = Xc.T @ yc
    try:
        coef = cho_solve(cho_factor(G), rhs)
    except LinAlgError as e:
        raise NumericalError(
            f"ridge system is not positive definite at penalty {penalty}"
        ) from e
    return RidgeModel(
        coefficients=coef,
        intercept=y_mean,
        feature_means=x_means,
        response_mean=y_mean,
        penalty=float(penalty),
    )


def predict_point(model: RidgeModel, x: np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    if x.shape != model.coefficients.shape:
        raise ValidationError(
            f"query has {x.shape} entries, model expects {model.coefficients.shape}"
        )
    return float(model.intercept + (x - model.feature_means) @ model.coefficients)


def predict_point_batch(model: RidgeModel, X: np.ndarray) -> np.ndarray:
    """Vectorized predict_point over the rows of X."""
    X = np.asarray(X, dtype=float)
    if X.shape[1] != model.coefficients.shape[0]:
        raise ValidationError(
            f"query rows have {X.shape[1]} entries, model expects "
            f"{model.coefficients.shape[0]}"
        )
    return model.intercept + (X - model.feature_means) @ model.coefficients


def _quantile_index(level: float, k: int) -> int:
    # 1-based order-statistic index ceil(level * k), computed exactly for the
    # binary value of the float level.
    return math.ceil(Fraction(level) * k)


def predict_quantile(model: KnnQuantileModel, x: np.ndarray) -> float:
    """Empirical level-quantile of the k nearest responses (Euclidean metric).

    Distance ties are broken in favor of the lower training index.
    """
    x = np.asarray(x, dtype=float)
    dists = np.linalg.norm(model.train_features - x, axis=1)
    nearest = np.argsort(dists, kind="stable")[: model.k]
    vals = np.sort(model.train_response[nearest])
    return float(vals[_quantile_index(model.level, model.k) - 1])


def predict_quantile_batch(model: KnnQuantileModel, X: np.ndarray) -> np.ndarray:
    """Vectorized predict_quantile over the rows of X."""
    X = np.asarray(X, dtype=float)
    diffs = model.train_features[None, :, :] - X[:, None, :]
    dists = np.sqrt((diffs * diffs).sum(axis=2))
    nearest = np.argsort(dists, axis=1, kind="stable")[:, : model.k]
    vals = np.sort(model.train_response[nearest], axis=1)
    return vals[:, _quantile_index(model.level, model.k) - 1]
