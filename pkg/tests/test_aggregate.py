import math
from fractions import Fraction

import numpy as np
import pytest

from multisplit import (
    Dataset,
    MultiSplitConfig,
    PredictionSet,
    ScoreSpec,
    SplitComputationError,
    ValidationError,
    aggregate_intervals,
    check_lambda_condition,
    make_split_plans,
    markov_bound,
    multi_split_set,
    per_split_level,
    split_conformal_set,
)
from multisplit.aggregate import _vote_measure_batch

from helpers import assert_aggregate_matches_oracle, random_prediction_set


def _sets(*bounds):
    return [PredictionSet.from_intervals([b]) if b else PredictionSet.empty() for b in bounds]


def _linear_data(rng, n=60, d=3, noise=0.5):
    X = rng.standard_normal((n, d))
    coef = rng.standard_normal(d)
    return Dataset(X, X @ coef + noise * rng.standard_normal(n))


class TestPerSplitLevel:
    def test_tau_half_even_B(self):
        assert per_split_level(0.1, 0.5, 0, 50) == 0.05

    def test_leftskewed_runs_at_full_level(self):
        assert per_split_level(0.1, Fraction(25, 51), 25, 51) == 0.1

    def test_bonferroni(self):
        B = 20
        assert per_split_level(0.1, Fraction(B - 1, B), 0, B) == 0.1 / B

    def test_union(self):
        assert per_split_level(0.1, 0.0, 0, 17) == 0.1

    def test_beta_out_of_range_rejected(self):
        with pytest.raises(ValidationError):
            per_split_level(0.5, 0.0, 10, 5)  # beta = 0.5 * 15/5 = 1.5
        with pytest.raises(ValidationError):
            per_split_level(0.1, 1.0, 0, 10)  # tau > (B-1)/B
        with pytest.raises(ValidationError):
            per_split_level(0.1, 0.5, -1, 10)


class TestMarkovBound:
    def test_plain_markov(self):
        assert markov_bound(10, 0.02, 5, 0) == pytest.approx(10 * 0.02 / 5)

    def test_smoothed(self):
        assert markov_bound(51, 0.1, 26, 25) == pytest.approx(0.1)

    def test_capped_at_one(self):
        assert markov_bound(10, 0.2, 1, 0) == 1.0


class TestAggregateIntervals:
    def test_three_interval_example(self):
        sets = _sets((0, 2), (1, 3), (2, 4))
        assert aggregate_intervals(sets, 2) == PredictionSet.from_intervals([(1, 3)])
        assert aggregate_intervals(sets, 1) == PredictionSet.from_intervals([(0, 4)])
        assert aggregate_intervals(sets, 3) == PredictionSet.from_intervals([(2, 2)])
        for minc in (1, 2, 3):
            assert_aggregate_matches_oracle(sets, minc, aggregate_intervals(sets, minc))

    def test_empty_set_contributes_nothing(self):
        sets = [
            PredictionSet.from_intervals([(0, 1)]),
            PredictionSet.empty(),
            PredictionSet.from_intervals([(0, 1)]),
        ]
        assert aggregate_intervals(sets, 2) == PredictionSet.from_intervals([(0, 1)])

    def test_unbounded_input_acts_as_always_voting(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            finite = [random_prediction_set(rng) for _ in range(4)]
            sets = finite + [PredictionSet.whole_line()]
            got = aggregate_intervals(sets, 5)
            expected = aggregate_intervals(finite, 4)
            assert got == expected
            assert_aggregate_matches_oracle(sets, 5, got)

    def test_min_count_bounds(self):
        sets = _sets((0, 1), (2, 3))
        with pytest.raises(ValidationError):
            aggregate_intervals(sets, 0)
        with pytest.raises(ValidationError):
            aggregate_intervals(sets, 3)

    def test_disjoint_union_pieces(self):
        sets = _sets((0, 1), (5, 6))
        got = aggregate_intervals(sets, 1)
        assert got == PredictionSet.from_intervals([(0, 1), (5, 6)])

    def test_sweep_matches_oracle_randomized(self):
        rng = np.random.default_rng(42)
        for _ in range(200):
            B = int(rng.integers(1, 21))
            sets = [random_prediction_set(rng) for _ in range(B)]
            minc = int(rng.integers(1, B + 1))
            assert_aggregate_matches_oracle(sets, minc, aggregate_intervals(sets, minc))

    def test_monotone_in_min_count(self):
        rng = np.random.default_rng(7)
        for _ in range(50):
            B = int(rng.integers(2, 12))
            sets = [random_prediction_set(rng) for _ in range(B)]
            results = [aggregate_intervals(sets, mc) for mc in range(1, B + 1)]
            for bigger, smaller in zip(results, results[1:]):
                assert smaller.is_subset_of(bigger)


class TestVoteMeasureBatch:
    def test_matches_aggregate_total_width(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            B, T = int(rng.integers(2, 12)), int(rng.integers(1, 6))
            centers = rng.normal(scale=3.0, size=(B, T))
            radii = rng.exponential(1.0, size=B)
            if rng.random() < 0.3:
                radii[rng.integers(0, B)] = math.inf
            los = centers - radii[:, None]
            his = centers + radii[:, None]
            minc = int(rng.integers(1, B + 1))
            widths = _vote_measure_batch(los, his, minc)
            for t in range(T):
                sets = [PredictionSet.from_intervals([(los[b, t], his[b, t])]) for b in range(B)]
                expected = aggregate_intervals(sets, minc).total_width()
                if math.isinf(expected):
                    assert math.isinf(widths[t])
                else:
                    assert widths[t] == pytest.approx(expected, abs=1e-9)


class TestMultiSplitSet:
    def test_single_split_degeneracy(self):
        rng = np.random.default_rng(1)
        data = _linear_data(rng)
        spec = ScoreSpec(learner_config={"penalty": 0.2})
        config = MultiSplitConfig(
            B=1, tau=0.0, lam=0, alpha=0.1, per_split_m=20, per_split_score=spec, seed=5
        )
        x = rng.standard_normal(3)
        got = multi_split_set(data, config, x)
        plan = make_split_plans(data.n, 20, 1, seed=5)[0]
        assert got == split_conformal_set(data, plan, spec, 0.1, x)

    def test_identical_plans_collapse_to_single_split(self):
        rng = np.random.default_rng(2)
        data = _linear_data(rng)
        spec = ScoreSpec(learner_config={"penalty": 0.2})
        B, tau, lam = 7, Fraction(1, 2), 1
        plan = make_split_plans(data.n, 20, 1, seed=9)[0]
        config = MultiSplitConfig(
            B=B, tau=tau, lam=lam, alpha=0.2, per_split_m=20, per_split_score=spec, seed=0
        )
        x = rng.standard_normal(3)
        got = multi_split_set(data, config, x, plans=[plan] * B)
        beta = Fraction(per_split_level(0.2, tau, lam, B))
        assert got == split_conformal_set(data, plan, spec, beta, x)

    def test_bonferroni_intersection_equality(self):
        rng = np.random.default_rng(3)
        for trial in range(10):
            data = _linear_data(rng, n=50)
            B, alpha = 5, 0.3
            spec = ScoreSpec(learner_config={"penalty": 0.1})
            config = MultiSplitConfig(
                B=B, tau=Fraction(B - 1, B), lam=0, alpha=alpha,
                per_split_m=20, per_split_score=spec, seed=trial,
            )
            x = rng.standard_normal(3)
            got = multi_split_set(data, config, x)
            plans = make_split_plans(data.n, 20, B, seed=trial)
            split_sets = [split_conformal_set(data, p, spec, alpha / B, x) for p in plans]
            # direct intersection of B intervals
            lo = max(s.intervals[0].lo for s in split_sets)
            hi = min(s.intervals[0].hi for s in split_sets)
            expected = (
                PredictionSet.empty() if lo > hi else PredictionSet.from_intervals([(lo, hi)])
            )
            assert got == expected

    def test_union_equality(self):
        rng = np.random.default_rng(4)
        for trial in range(10):
            data = _linear_data(rng, n=50)
            B, alpha = 5, 0.3
            spec = ScoreSpec(learner_config={"penalty": 0.1})
            config = MultiSplitConfig(
                B=B, tau=0, lam=0, alpha=alpha,
                per_split_m=20, per_split_score=spec, seed=100 + trial,
            )
            x = rng.standard_normal(3)
            got = multi_split_set(data, config, x)
            plans = make_split_plans(data.n, 20, B, seed=100 + trial)
            split_sets = [split_conformal_set(data, p, spec, alpha, x) for p in plans]
            expected = PredictionSet.from_intervals(
                [iv for s in split_sets for iv in s.intervals]
            )
            assert got == expected

    def test_split_failure_names_the_split(self):
        # second split trains on constant features at penalty 0: singular fit
        X = np.ones((8, 1))
        X[:4, 0] = np.arange(4.0)
        y = np.arange(8.0)
        data = Dataset(X, y)
        from multisplit import SplitPlan

        good = SplitPlan(train_idx=(0, 1, 2, 3), calib_idx=(4, 5, 6, 7))
        bad = SplitPlan(train_idx=(4, 5, 6, 7), calib_idx=(0, 1, 2, 3))
        config = MultiSplitConfig(
            B=2, tau=0, lam=0, alpha=0.2, per_split_m=4,
            per_split_score=ScoreSpec(learner_config={"penalty": 0.0}), seed=0,
        )
        with pytest.raises(SplitComputationError, match="split 1"):
            multi_split_set(data, config, np.array([0.5]), plans=[good, bad])

    def test_config_broadcast_and_validation(self):
        spec = ScoreSpec()
        config = MultiSplitConfig(
            B=3, tau=0.5, lam=0, alpha=0.1, per_split_m=10, per_split_score=spec, seed=0
        )
        assert config.per_split_m == (10, 10, 10)
        assert len(config.per_split_score) == 3
        assert config.min_count == 2 and config.k == 2
        with pytest.raises(ValidationError):
            MultiSplitConfig(
                B=3, tau=0.5, lam=0, alpha=0.1, per_split_m=[10, 10],
                per_split_score=spec, seed=0,
            )


class TestCheckLambdaCondition:
    def test_concentrated_on_extremes(self):
        B = 6
        pmf = np.zeros(B + 1)
        pmf[0], pmf[B] = 0.3, 0.7
        assert check_lambda_condition(pmf, k=1, lam=B - 1) is True

    def test_uniform_B3(self):
        assert check_lambda_condition([0.25, 0.25, 0.25, 0.25], k=2, lam=1) is True

    def test_right_skewed_B3(self):
        assert check_lambda_condition([0.5, 0.0, 0.5, 0.0], k=2, lam=1) is False

    def test_malformed_pmf(self):
        with pytest.raises(ValidationError):
            check_lambda_condition([0.5, 0.6], k=1, lam=0)
        with pytest.raises(ValidationError):
            check_lambda_condition([0.5, 0.5, 0.1, -0.1], k=1, lam=0)
        with pytest.raises(ValidationError):
            check_lambda_condition([0.5, 0.5], k=2, lam=0)

    def test_bound_holds_on_admissible_pmfs(self):
        # whenever the condition passes, the true tail obeys the smoothed bound
        rng = np.random.default_rng(11)
        checked = 0
        while checked < 200:
            B = int(rng.integers(2, 10))
            pmf = rng.dirichlet(np.ones(B + 1) * rng.uniform(0.2, 3.0))
            k = int(rng.integers(1, B + 1))
            lam = int(rng.integers(0, B))
            if not check_lambda_condition(pmf, k, lam):
                continue
            beta = float(np.arange(B + 1) @ pmf) / B  # per-split marginal bound
            if beta <= 0:
                continue
            tail = float(pmf[k:].sum())
            assert tail <= markov_bound(B, beta, k, lam) + 1e-12
            checked += 1
