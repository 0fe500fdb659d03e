"""Benchmark harness: crime-data experiment, Monte Carlo coverage, summaries.

The main experiment repeatedly samples a train/test split, runs every
configured method on the shared split plans, and records per-replication
coverage and mean interval width. Replications are seeded independently from
(seed, replication), so serial and threaded runs produce identical records.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from fractions import Fraction
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .aggregate import MultiSplitConfig, _derived_levels, _vote_measure_batch, multi_split_set
from .conformal import quantile_index, split_conformal_set
from .core import Dataset, ValidationError, _MISSING_MARKERS, make_split_plans
from .crossconf import (
    cross_conformal_set,
    fit_loo_ridge,
    jackknife_plus_interval,
    loo_conformal_set,
    loo_predictions,
)
from .learners import largest_singular_value, predict_point_batch
from .scores import ABSOLUTE_RESIDUAL, ScoreSpec, calibration_scores, fit_score

logger = logging.getLogger(__name__)

CRIME_RESPONSE = "ViolentCrimesPerPop"
CRIME_NON_PREDICTIVE = ("state", "county", "community", "communityname", "fold")
CRIME_FEATURE_COUNT = 99

NAMED_METHODS = (
    "single",
    "leftskewed",
    "jackknife_plus",
    "tau_alpha",
    "tau_half",
    "tau_one_minus_alpha",
)


@dataclass(frozen=True)
class MethodSpec:
    """One benchmark method: a single split, a vote aggregation, or jackknife+.

    alpha_factor rescales the working level; the jackknife+ comparison runs
    at alpha/2 so its 1 - 2*alpha guarantee matches the others' 1 - alpha.
    """

    kind: str  # single | multisplit | jackknife_plus | crossconf | loo
    name: str = ""
    tau: float | Fraction | None = None
    lam: int = 0
    B: int | None = None
    m: int | None = None
    alpha_factor: float = 1.0
    score: ScoreSpec | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("single", "multisplit", "jackknife_plus", "crossconf", "loo"):
            raise ValidationError(f"unknown method kind {self.kind!r}")
        if self.kind in ("multisplit", "crossconf") and self.tau is None:
            raise ValidationError(f"method {self.kind} requires tau")
        if not self.name:
            object.__setattr__(self, "name", self.kind)


def resolve_method(
    method: str | MethodSpec, B: int, m: int, alpha: float
) -> MethodSpec:
    """Turn a method token into a concrete MethodSpec for the given B, m, alpha.

    Tokens: the named presets plus "custom:TAU:LAM" where TAU accepts decimal
    or rational text ("0.3", "25/51").
    """
    if isinstance(method, MethodSpec):
        return replace(
            method,
            B=method.B if method.B is not None else B,
            m=method.m if method.m is not None else m,
        )
    token = method.strip()
    if token == "single":
        return MethodSpec(kind="single", name=token, m=m)
    if token == "leftskewed":
        return MethodSpec(
            kind="multisplit",
            name=token,
            tau=Fraction(B - 1, 2 * B),
            lam=(B - 1) // 2,
            B=B,
            m=m,
        )
    if token == "jackknife_plus":
        return MethodSpec(kind="jackknife_plus", name=token, alpha_factor=0.5)
    if token == "tau_alpha":
        return MethodSpec(kind="multisplit", name=token, tau=Fraction(alpha), B=B, m=m)
    if token == "tau_half":
        return MethodSpec(kind="multisplit", name=token, tau=Fraction(1, 2), B=B, m=m)
    if token == "tau_one_minus_alpha":
        return MethodSpec(
            kind="multisplit", name=token, tau=1 - Fraction(alpha), B=B, m=m
        )
    if token == "loo":
        return MethodSpec(kind="loo", name=token)
    if token.startswith("custom:") or token.startswith("crossconf:"):
        parts = token.split(":")
        if len(parts) != 3:
            raise ValidationError(f"{parts[0]} method must look like {parts[0]}:TAU:LAM")
        kind = "multisplit" if parts[0] == "custom" else "crossconf"
        return MethodSpec(
            kind=kind, name=token, tau=Fraction(parts[1]), lam=int(parts[2]), B=B, m=m
        )
    raise ValidationError(
        f"unknown method {token!r}; expected one of {', '.join(NAMED_METHODS)}, "
        "loo, custom:TAU:LAM, or crossconf:TAU:LAM"
    )


@dataclass(frozen=True)
class ExperimentConfig:
    dataset_path: str | Path | None
    n_train: int
    alpha: float
    B: int
    m: int
    replications: int
    methods: tuple[str | MethodSpec, ...] = NAMED_METHODS
    seed: int = 0
    standardize: bool = True
    response_col: str | int = CRIME_RESPONSE
    strict_crime: bool = False

    def __post_init__(self) -> None:
        if self.replications < 1:
            raise ValidationError("replications must be >= 1")
        if not 1 <= self.m <= self.n_train - 1:
            raise ValidationError(f"m={self.m} must lie in [1, n_train-1]")
        if self.seed < 0:
            raise ValidationError("seed must be a non-negative integer")
        object.__setattr__(self, "methods", tuple(self.methods))


@dataclass(frozen=True)
class RepRecord:
    replication: int
    method: str
    coverage: float  # NaN when the method failed in this replication
    width: float     # mean test-set width; +inf if any set was unbounded


@dataclass(frozen=True)
class SummaryRow:
    method: str
    cov_min: float
    cov_q1: float
    cov_median: float
    cov_mean: float
    cov_q3: float
    cov_max: float
    width_min: float
    width_q1: float
    width_median: float
    width_mean: float
    width_q3: float
    width_max: float
    width_unbounded: int  # replications whose mean width was +inf


def load_crime_dataset(
    path: str | Path,
    response_col: str | int = CRIME_RESPONSE,
    drop_columns: Sequence[str] = CRIME_NON_PREDICTIVE,
    strict: bool = False,
) -> Dataset:
    """Load the Communities-and-Crime CSV, keeping fully numeric feature columns.

    Non-predictive columns are dropped by name; any column containing a
    missing marker or a non-numeric cell is dropped as well. Under
    ``strict`` the surviving feature count must be exactly 99.
    """
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"no such file: {path}")
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValidationError(f"{path}: empty file, expected a header row")
    header = [h.strip() for h in rows[0]]
    body = rows[1:]
    if not body:
        raise ValidationError(f"{path}: no data rows")
    if isinstance(response_col, int):
        if not 0 <= response_col < len(header):
            raise ValidationError(f"response column index {response_col} out of range")
        resp_idx = response_col
    else:
        try:
            resp_idx = header.index(response_col)
        except ValueError:
            raise ValidationError(
                f"response column {response_col!r} not found in header"
            ) from None
    drop = set(drop_columns)
    response = np.empty(len(body))
    for i, row in enumerate(body, start=1):
        if len(row) != len(header):
            raise ValidationError(f"row {i}: expected {len(header)} cells, got {len(row)}")
        cell = row[resp_idx].strip()
        if cell in _MISSING_MARKERS:
            raise ValidationError(f"row {i}: missing response value")
        try:
            response[i - 1] = float(cell)
        except ValueError:
            raise ValidationError(f"row {i}: non-numeric response {cell!r}") from None
    kept_idx: list[int] = []
    for j, name in enumerate(header):
        if j == resp_idx or name in drop:
            continue
        column = np.empty(len(body))
        ok = True
        for i, row in enumerate(body):
            cell = row[j].strip()
            if cell in _MISSING_MARKERS:
                ok = False  # missing data: drop the whole column
                break
            try:
                column[i] = float(cell)
            except ValueError:
                ok = False  # categorical: drop the whole column
                break
        if ok:
            kept_idx.append(j)
    if strict and len(kept_idx) != CRIME_FEATURE_COUNT:
        raise ValidationError(
            f"strict reproduction expects {CRIME_FEATURE_COUNT} feature columns "
            f"after filtering, got {len(kept_idx)}"
        )
    features = np.empty((len(body), len(kept_idx)))
    for col, j in enumerate(kept_idx):
        features[:, col] = [float(row[j]) for row in body]
    return Dataset(
        features=features,
        response=response,
        column_names=tuple(header[j] for j in kept_idx),
    )


def ridge_penalty_for(train_features: np.ndarray) -> float:
    """Benchmark convention: 0.001 * (largest singular value)^2 of the training matrix."""
    c = largest_singular_value(train_features)
    return 0.001 * c * c


def _jackknife_order_indices(alpha: float, n: int) -> tuple[int, int]:
    alpha_f = Fraction(alpha)
    return math.floor(alpha_f * (n + 1)), math.ceil((1 - alpha_f) * (n + 1))


def _run_replication(
    data: Dataset, config: ExperimentConfig, methods: Sequence[MethodSpec], rep: int
) -> list[RepRecord]:
    ss = np.random.SeedSequence([config.seed, rep])
    split_ss, plan_ss = ss.spawn(2)
    perm = np.random.default_rng(split_ss).permutation(data.n)
    train_rows, test_rows = perm[: config.n_train], perm[config.n_train :]
    Xtr = data.features[train_rows]
    ytr = data.response[train_rows]
    Xte = data.features[test_rows]
    yte = data.response[test_rows]
    if config.standardize:
        mu, sd = Xtr.mean(axis=0), Xtr.std(axis=0)
        sd = np.where(sd == 0, 1.0, sd)
        Xtr = (Xtr - mu) / sd
        Xte = (Xte - mu) / sd
    n_train, n_test = Xtr.shape[0], Xte.shape[0]

    # Shared state across methods: the same B plans and fitted split models,
    # and one set of leave-one-out fits for jackknife+. A shared-fit failure
    # is recorded against every method that depends on it.
    centers = sorted_scores = None
    split_error: Exception | None = None
    loo_error: Exception | None = None
    minus_sorted = plus_sorted = None
    try:
        penalty = ridge_penalty_for(Xtr)
        train_ds = Dataset(Xtr, ytr)
        spec = ScoreSpec(kind=ABSOLUTE_RESIDUAL, learner_config={"penalty": penalty})
    except Exception as e:
        split_error = loo_error = e
    if split_error is None and any(m.kind in ("single", "multisplit") for m in methods):
        try:
            plans = make_split_plans(n_train, config.m, config.B, plan_ss)
            centers = np.empty((config.B, n_test))
            sorted_scores = np.empty((config.B, config.m))
            for b, plan in enumerate(plans):
                fs = fit_score(train_ds, plan, spec)
                centers[b] = predict_point_batch(fs.point_model, Xte)
                sorted_scores[b] = np.sort(calibration_scores(train_ds, plan, fs))
        except Exception as e:
            split_error = e
    if loo_error is None and any(m.kind == "jackknife_plus" for m in methods):
        try:
            loo = fit_loo_ridge(Xtr, ytr, penalty)
            preds = loo_predictions(loo, Xte)
            minus_sorted = np.sort(preds - loo.residuals[:, None], axis=0)
            plus_sorted = np.sort(preds + loo.residuals[:, None], axis=0)
        except Exception as e:
            loo_error = e

    records = []
    for method in methods:
        try:
            dep_error = loo_error if method.kind == "jackknife_plus" else split_error
            if dep_error is not None:
                raise dep_error
            records.append(
                RepRecord(rep, method.name, *_evaluate_method(
                    method, config, yte,
                    centers, sorted_scores, minus_sorted, plus_sorted, n_train,
                ))
            )
        except Exception as e:  # record the failure, keep the run going
            logger.warning("replication %d method %s failed: %s", rep, method.name, e)
            records.append(RepRecord(rep, method.name, math.nan, math.nan))
    return records


def _evaluate_method(
    method: MethodSpec,
    config: ExperimentConfig,
    yte: np.ndarray,
    centers: np.ndarray | None,
    sorted_scores: np.ndarray | None,
    minus_sorted: np.ndarray | None,
    plus_sorted: np.ndarray | None,
    n_train: int,
) -> tuple[float, float]:
    m = config.m
    if method.kind == "single":
        idx = quantile_index(Fraction(config.alpha) * Fraction(method.alpha_factor), m)
        r = math.inf if idx > m else float(sorted_scores[0][idx - 1])
        covered = np.abs(yte - centers[0]) <= r
        return float(covered.mean()), 2.0 * r
    if method.kind == "multisplit":
        _, min_count, beta = _derived_levels(
            Fraction(config.alpha) * Fraction(method.alpha_factor),
            method.tau, method.lam, config.B,
        )
        idx = quantile_index(beta, m)
        radii = (
            np.full(config.B, math.inf)
            if idx > m
            else sorted_scores[:, idx - 1]
        )
        counts = (np.abs(yte[None, :] - centers) <= radii[:, None]).sum(axis=0)
        covered = counts >= min_count
        los = centers - radii[:, None]
        his = centers + radii[:, None]
        widths = _vote_measure_batch(los, his, min_count)
        return float(covered.mean()), float(widths.mean())
    if method.kind == "jackknife_plus":
        alpha_eff = config.alpha * method.alpha_factor
        lo_idx, hi_idx = _jackknife_order_indices(alpha_eff, n_train)
        lower = (
            np.full(yte.shape, -math.inf) if lo_idx < 1 else minus_sorted[lo_idx - 1]
        )
        upper = (
            np.full(yte.shape, math.inf) if hi_idx > n_train else plus_sorted[hi_idx - 1]
        )
        covered = (lower <= yte) & (yte <= upper)
        return float(covered.mean()), float(np.mean(upper - lower))
    raise ValidationError(f"method kind {method.kind!r} is not supported by the experiment")


def run_experiment(
    config: ExperimentConfig, data: Dataset | None = None, threads: int = 1
) -> list[RepRecord]:
    """Run every configured method over config.replications train/test splits.

    All methods inside one replication share the train/test split and, where
    applicable, the same B split plans. Output order and numeric content are
    fully determined by the config seed, regardless of ``threads``.
    """
    if data is None:
        if config.dataset_path is None:
            raise ValidationError("config has no dataset_path and no dataset was given")
        data = load_crime_dataset(
            config.dataset_path,
            response_col=config.response_col,
            strict=config.strict_crime,
        )
    if not 2 <= config.n_train < data.n:
        raise ValidationError(
            f"n_train={config.n_train} must lie in [2, {data.n - 1}] for {data.n} rows"
        )
    methods = tuple(
        resolve_method(tok, B=config.B, m=config.m, alpha=config.alpha)
        for tok in config.methods
    )
    reps = range(config.replications)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            per_rep = list(pool.map(lambda r: _run_replication(data, config, methods, r), reps))
    else:
        per_rep = [_run_replication(data, config, methods, r) for r in reps]
    return [rec for recs in per_rep for rec in recs]


@dataclass(frozen=True)
class LinearGaussianDGP:
    """Gaussian-feature linear model with fixed coefficients drawn from coef_seed."""

    d: int
    n: int
    noise_sd: float
    coef_seed: int = 0

    def coefficients(self) -> np.ndarray:
        return np.random.default_rng(self.coef_seed).standard_normal(self.d)

    def sample(
        self, rng: np.random.Generator, extra: int = 1
    ) -> tuple[Dataset, np.ndarray, np.ndarray]:
        """Training dataset plus ``extra`` fresh test pairs."""
        coef = self.coefficients()
        X = rng.standard_normal((self.n + extra, self.d))
        y = X @ coef + self.noise_sd * rng.standard_normal(self.n + extra)
        return Dataset(X[: self.n], y[: self.n]), X[self.n :], y[self.n :]


@dataclass(frozen=True)
class CoverageEstimate:
    coverage: float
    stderr: float
    reps: int

    def __str__(self) -> str:
        return f"coverage {self.coverage:.4f} +/- {self.stderr:.4f} ({self.reps} reps)"


def simulate_coverage(
    dgp: LinearGaussianDGP,
    method: str | MethodSpec,
    alpha: float,
    reps: int,
    seed: int,
) -> CoverageEstimate:
    """Monte Carlo marginal coverage of one method under the synthetic DGP.

    Every repetition draws fresh training data and one test pair, builds the
    method's prediction set, and records the hit. Returns the hit rate and
    its binomial standard error.
    """
    if reps < 100:
        raise ValidationError("need at least 100 repetitions for a stable estimate")
    if isinstance(method, MethodSpec):
        spec = method
    else:
        # token defaults for the simulator: half/half split, 50 splits
        spec = resolve_method(method, B=50, m=dgp.n // 2, alpha=alpha)
    if spec.kind in ("single", "multisplit") and not spec.m:
        raise ValidationError(f"method {spec.name} requires m")
    if spec.kind in ("multisplit", "crossconf") and not spec.B:
        raise ValidationError(f"method {spec.name} requires B")
    score = spec.score if spec.score is not None else ScoreSpec()
    alpha_eff = alpha * spec.alpha_factor
    hits = 0
    for r in range(reps):
        data_ss, plan_ss = np.random.SeedSequence([seed, r]).spawn(2)
        rng = np.random.default_rng(data_ss)
        data, Xq, yq = dgp.sample(rng)
        x, y = Xq[0], float(yq[0])
        if spec.kind == "single":
            plan = make_split_plans(dgp.n, spec.m, 1, plan_ss)[0]
            pred = split_conformal_set(data, plan, score, alpha_eff, x)
        elif spec.kind == "multisplit":
            config = MultiSplitConfig(
                B=spec.B, tau=spec.tau, lam=spec.lam, alpha=alpha_eff,
                per_split_m=spec.m, per_split_score=score, seed=0,
            )
            plans = make_split_plans(dgp.n, spec.m, spec.B, plan_ss)
            pred = multi_split_set(data, config, x, plans=plans)
        elif spec.kind == "crossconf":
            pred = cross_conformal_set(
                data, spec.B, score, alpha_eff, spec.tau, spec.lam,
                int(plan_ss.generate_state(1)[0]), x,
            )
        elif spec.kind == "loo":
            pred = loo_conformal_set(data, score, alpha_eff, x)
        else:  # jackknife_plus
            penalty = float(score.learner_config.get("penalty", 0.0))
            pred = jackknife_plus_interval(data, alpha_eff, x, penalty=penalty)
        hits += pred.contains(y)
    coverage = hits / reps
    return CoverageEstimate(
        coverage=coverage,
        stderr=math.sqrt(coverage * (1.0 - coverage) / reps),
        reps=reps,
    )


def _quantile_type7(sorted_vals: np.ndarray, q: float) -> float:
    """Linear interpolation between order statistics; stable around infinities."""
    n = sorted_vals.shape[0]
    h = (n - 1) * q
    lo = math.floor(h)
    frac = h - lo
    if frac == 0 or sorted_vals[lo] == sorted_vals[min(lo + 1, n - 1)]:
        return float(sorted_vals[lo])
    return float(sorted_vals[lo] + frac * (sorted_vals[lo + 1] - sorted_vals[lo]))


def _six_numbers(values: np.ndarray) -> tuple[float, float, float, float, float, float]:
    s = np.sort(values)
    return (
        float(s[0]),
        _quantile_type7(s, 0.25),
        _quantile_type7(s, 0.5),
        float(np.mean(s)),
        _quantile_type7(s, 0.75),
        float(s[-1]),
    )


def summarize(records: Sequence[RepRecord]) -> list[SummaryRow]:
    """Six-number summaries of coverage and width per method.

    Failed replications (NaN records) are excluded; unbounded widths stay
    +inf and propagate into the mean/max, with their count reported.
    """
    if not records:
        raise ValidationError("no records to summarize")
    by_method: dict[str, list[RepRecord]] = {}
    for rec in records:
        by_method.setdefault(rec.method, []).append(rec)
    rows = []
    for method, recs in by_method.items():
        good = [r for r in recs if not math.isnan(r.coverage)]
        if not good:
            raise ValidationError(f"method {method!r} has no successful replications")
        cov = np.array([r.coverage for r in good])
        width = np.array([r.width for r in good])
        rows.append(
            SummaryRow(
                method,
                *_six_numbers(cov),
                *_six_numbers(width),
                width_unbounded=int(np.isinf(width).sum()),
            )
        )
    return rows


def write_records_csv(records: Sequence[RepRecord], path: str | Path) -> Path:
    """Stable schema: replication,method,coverage,width with repr-formatted floats."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["replication", "method", "coverage", "width"])
        for rec in records:
            writer.writerow(
                [rec.replication, rec.method, repr(rec.coverage), repr(rec.width)]
            )
    return path


_SUMMARY_FIELDS = (
    "method",
    "cov_min", "cov_q1", "cov_median", "cov_mean", "cov_q3", "cov_max",
    "width_min", "width_q1", "width_median", "width_mean", "width_q3", "width_max",
    "width_unbounded",
)


def write_summary_csv(rows: Sequence[SummaryRow], path: str | Path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_SUMMARY_FIELDS)
        for row in rows:
            writer.writerow(
                [getattr(row, f) if f in ("method", "width_unbounded") else repr(getattr(row, f))
                 for f in _SUMMARY_FIELDS]
            )
    return path


def _json_safe(x: Any) -> Any:
    if isinstance(x, float):
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        if math.isnan(x):
            return None
    return x


def write_summary_json(rows: Sequence[SummaryRow], path: str | Path) -> Path:
    path = Path(path)
    payload = [
        {f: _json_safe(getattr(row, f)) for f in _SUMMARY_FIELDS} for row in rows
    ]
    path.write_text(json.dumps(payload, indent=2) + "\n")
    return path
