import math
from fractions import Fraction

import numpy as np
import pytest

from multisplit import (
    Dataset,
    FoldPlan,
    MultiSplitConfig,
    ScoreSpec,
    ValidationError,
    cross_conformal_set,
    fit_ridge,
    jackknife_plus_interval,
    loo_conformal_set,
    make_folds,
    multi_split_set,
)
from multisplit.crossconf import (
    _jackknife_interval,
    _loo_vote_threshold,
    fit_loo_ridge,
    loo_predictions,
)
from multisplit.learners import predict_point


def _linear_data(rng, n=20, d=2, noise=0.3):
    X = rng.standard_normal((n, d))
    coef = rng.standard_normal(d)
    return Dataset(X, X @ coef + noise * rng.standard_normal(n))


class TestFolds:
    def test_partition(self):
        folds = make_folds(10, 3, seed=0)
        sizes = sorted(len(f) for f in folds.folds)
        assert sizes == [3, 3, 4]
        assert sorted(i for f in folds.folds for i in f) == list(range(10))

    def test_every_index_calibrates_once(self):
        folds = make_folds(12, 4, seed=1)
        plans = folds.to_split_plans()
        calibs = [i for p in plans for i in p.calib_idx]
        assert sorted(calibs) == list(range(12))

    def test_b2_symmetric_halves(self):
        folds = make_folds(8, 2, seed=2)
        p0, p1 = folds.to_split_plans()
        assert p0.calib_idx == p1.train_idx
        assert p0.train_idx == p1.calib_idx

    def test_b_equals_n_is_leave_one_out(self):
        folds = make_folds(6, 6, seed=3)
        assert all(len(f) == 1 for f in folds.folds)

    def test_deterministic(self):
        assert make_folds(20, 4, seed=7) == make_folds(20, 4, seed=7)

    def test_validation(self):
        with pytest.raises(ValidationError):
            make_folds(5, 6, seed=0)
        with pytest.raises(ValidationError):
            make_folds(5, 1, seed=0)
        with pytest.raises(ValidationError):
            FoldPlan(((0, 1), (3,)))  # not a partition of 0..2


class TestCrossConformal:
    def test_matches_plan_injected_multi_split(self):
        rng = np.random.default_rng(4)
        data = _linear_data(rng, n=24)
        spec = ScoreSpec(learner_config={"penalty": 0.2})
        B, alpha, tau, lam, seed = 4, 0.2, Fraction(1, 2), 0, 11
        x = rng.standard_normal(2)
        got = cross_conformal_set(data, B, spec, alpha, tau, lam, seed, x)
        folds = make_folds(24, B, seed)
        config = MultiSplitConfig(
            B=B, tau=tau, lam=lam, alpha=alpha,
            per_split_m=[len(f) for f in folds.folds], per_split_score=spec, seed=seed,
        )
        expected = multi_split_set(data, config, x, plans=folds.to_split_plans())
        assert got == expected

    def test_b_out_of_range(self):
        rng = np.random.default_rng(5)
        data = _linear_data(rng, n=6)
        with pytest.raises(ValidationError):
            cross_conformal_set(data, 7, ScoreSpec(), 0.2, 0.5, 0, 0, np.zeros(2))


class TestLooRidge:
    def test_matches_fresh_fit_without_each_row(self):
        rng = np.random.default_rng(6)
        data = _linear_data(rng, n=12, d=3)
        penalty = 0.4
        models = fit_loo_ridge(data.features, data.response, penalty)
        x = rng.standard_normal(3)
        preds = loo_predictions(models, x[None, :])[:, 0]
        for i in range(data.n):
            rest = [j for j in range(data.n) if j != i]
            direct = fit_ridge(data.subset(rest), penalty)
            assert preds[i] == pytest.approx(predict_point(direct, x), abs=1e-8)
            r_direct = abs(data.response[i] - predict_point(direct, data.features[i]))
            assert models.residuals[i] == pytest.approx(r_direct, abs=1e-8)


class TestLooConformal:
    def test_vote_threshold_arithmetic(self):
        # n=4, alpha=0.5: strictly more than 1.5 votes means at least 2 of 4
        assert _loo_vote_threshold(0.5, 4) == 2

    def test_negative_threshold_gives_whole_line(self):
        # alpha*(n+1) < 1 makes the vote threshold negative
        rng = np.random.default_rng(7)
        data = _linear_data(rng, n=5)
        s = loo_conformal_set(data, ScoreSpec(learner_config={"penalty": 0.1}), 0.1, np.zeros(2))
        (iv,) = s.intervals
        assert iv.lo == -math.inf and iv.hi == math.inf

    def test_noiseless_interpolation_degenerates_to_point(self):
        rng = np.random.default_rng(8)
        X = rng.standard_normal((10, 2))
        coef = np.array([1.5, -2.0])
        data = Dataset(X, X @ coef)
        x = rng.standard_normal(2)
        s = loo_conformal_set(data, ScoreSpec(learner_config={"penalty": 0.0}), 0.3, x)
        (iv,) = s.intervals
        assert iv.hi - iv.lo <= 1e-7
        assert s.contains(float(x @ coef))

    def test_matches_grid_and_endpoint_oracle(self):
        rng = np.random.default_rng(9)
        data = _linear_data(rng, n=8, d=2, noise=1.0)
        alpha = 0.35
        x = rng.standard_normal(2)
        spec = ScoreSpec(learner_config={"penalty": 0.5})
        s = loo_conformal_set(data, spec, alpha, x)
        models = fit_loo_ridge(data.features, data.response, 0.5)
        centers = loo_predictions(models, x[None, :])[:, 0]
        lows, highs = centers - models.residuals, centers + models.residuals
        threshold = (alpha * (data.n + 1) - 1) / data.n

        def oracle(y):
            frac = np.mean((lows <= y) & (y <= highs))
            return frac > threshold

        probes = set(np.concatenate([lows, highs]).tolist())
        probes |= {(a + b) / 2 for a in probes for b in probes}
        probes |= set(np.linspace(min(probes) - 1, max(probes) + 1, 400).tolist())
        for y in probes:
            assert s.contains(y) == oracle(y), f"mismatch at y={y}"


class TestJackknifePlus:
    def test_exchangeable_collapse(self):
        # identical leave-one-out models with equal residuals r: [mu - r, mu + r]
        preds = np.full(10, 2.5)
        r = 0.7
        s = _jackknife_interval(preds - r, preds + r, alpha=0.3)
        (iv,) = s.intervals
        assert (iv.lo, iv.hi) == (2.5 - 0.7, 2.5 + 0.7)

    def test_index_arithmetic_n4(self):
        minus = np.array([4.0, 1.0, 3.0, 2.0])
        plus = np.array([14.0, 11.0, 13.0, 12.0])
        s = _jackknife_interval(minus, plus, alpha=0.5)
        (iv,) = s.intervals
        assert iv.lo == 2.0  # floor(0.5*5) = 2nd smallest of minus
        assert iv.hi == 13.0  # ceil(0.5*5) = 3rd smallest of plus

    def test_degenerate_indices_whole_line(self):
        minus = np.array([0.0, 1.0])
        plus = np.array([2.0, 3.0])
        s = _jackknife_interval(minus, plus, alpha=0.05)  # alpha*(n+1) < 1
        (iv,) = s.intervals
        assert iv.lo == -math.inf and iv.hi == math.inf

    def test_contains_loo_set(self):
        rng = np.random.default_rng(10)
        for trial in range(50):
            n = int(rng.integers(5, 31))
            data = _linear_data(rng, n=n, d=2, noise=float(rng.uniform(0.1, 2.0)))
            alpha = float(rng.uniform(0.05, 0.45))
            penalty = float(rng.uniform(0.0, 1.0))
            x = rng.standard_normal(2)
            spec = ScoreSpec(learner_config={"penalty": penalty})
            loo = loo_conformal_set(data, spec, alpha, x)
            jk = jackknife_plus_interval(data, alpha, x, penalty=penalty)
            assert loo.is_subset_of(jk), f"containment failed on trial {trial}"

    def test_width_non_increasing_in_alpha(self):
        rng = np.random.default_rng(12)
        data = _linear_data(rng, n=25, d=2, noise=1.0)
        x = rng.standard_normal(2)
        widths = [
            jackknife_plus_interval(data, a, x, penalty=0.2).total_width()
            for a in [0.1, 0.2, 0.3, 0.4, 0.49]
        ]
        assert all(w1 >= w2 - 1e-12 for w1, w2 in zip(widths, widths[1:]))

    def test_coverage_at_least_one_minus_two_alpha(self):
        rng = np.random.default_rng(13)
        alpha, reps, hits = 0.15, 300, 0
        coef = np.array([0.8, -1.2])
        for r in range(reps):
            X = rng.standard_normal((21, 2))
            y = X @ coef + rng.standard_normal(21)
            data = Dataset(X[:20], y[:20])
            s = jackknife_plus_interval(data, alpha, X[20], penalty=0.1)
            hits += s.contains(float(y[20]))
        coverage = hits / reps
        se = math.sqrt(coverage * (1 - coverage) / reps)
        assert coverage >= 1 - 2 * alpha - 3 * se


class TestLooCoverage:
    def test_monte_carlo_at_least_one_minus_two_alpha(self):
        rng = np.random.default_rng(14)
        alpha, reps, hits = 0.2, 300, 0
        coef = np.array([1.0, 0.5])
        for r in range(reps):
            X = rng.standard_normal((19, 2))
            y = X @ coef + rng.standard_normal(19)
            data = Dataset(X[:18], y[:18])
            s = loo_conformal_set(data, ScoreSpec(learner_config={"penalty": 0.1}), alpha, X[18])
            hits += s.contains(float(y[18]))
        coverage = hits / reps
        se = math.sqrt(max(coverage * (1 - coverage), 1e-6) / reps)
        assert coverage >= 1 - 2 * alpha - 3 * se
