"""Command-line front end: per-point prediction, experiments, and simulation.

Prediction commands read a training CSV and a query CSV and write one JSON
line per query point: {"query_index": i, "intervals": [[lo, hi], ...]} with
infinite endpoints serialized as the strings "-inf"/"inf". Exit status is 0
on success, 1 on validation errors, 2 on runtime errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction
from pathlib import Path

import numpy as np

from .aggregate import MultiSplitConfig, fit_multi_split, multi_split_predict
from .bench import (
    ExperimentConfig,
    LinearGaussianDGP,
    NAMED_METHODS,
    resolve_method,
    run_experiment,
    simulate_coverage,
    summarize,
    write_records_csv,
    write_summary_csv,
    write_summary_json,
)
from .conformal import conformal_quantile, invert_score_threshold
from .core import (
    Dataset,
    MultiSplitError,
    PredictionSet,
    ValidationError,
    load_dataset,
    make_split_plans,
    prediction_set_to_json,
)
from .crossconf import jackknife_plus_batch, loo_conformal_batch, make_folds
from .learners import largest_singular_value
from .scores import ABSOLUTE_RESIDUAL, CQR, ScoreSpec, calibration_scores, fit_score


def _check(condition: bool, message: str) -> None:
    if not condition:
        raise ValidationError(message)


def _response_col(value: str) -> str | int:
    try:
        return int(value)
    except ValueError:
        return value


def _load_training(args: argparse.Namespace) -> Dataset:
    _check(args.data is not None, "--data is required")
    return load_dataset(args.data, _response_col(args.response_col))


def _load_query(path: str, d: int) -> np.ndarray:
    _check(path is not None, "--query is required")
    p = Path(path)
    if not p.exists():
        raise ValidationError(f"no such file: {p}")
    with p.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{p}: empty query file") from None
        _check(
            len(header) == d,
            f"query file has {len(header)} columns, training data has {d} features",
        )
        rows = []
        for rownum, row in enumerate(reader, start=1):
            try:
                rows.append([float(c) for c in row])
            except ValueError:
                raise ValidationError(f"query row {rownum}: non-numeric cell") from None
            _check(len(row) == d, f"query row {rownum}: expected {d} cells")
    _check(bool(rows), f"{p}: no query rows")
    return np.asarray(rows)


def _score_spec(args: argparse.Namespace, data: Dataset) -> ScoreSpec:
    if args.score == "residual":
        if args.penalty == "auto":
            c = largest_singular_value(data.features)
            penalty = 0.001 * c * c
        else:
            penalty = float(args.penalty)
            _check(penalty >= 0, "--penalty must be >= 0 (or 'auto')")
        return ScoreSpec(kind=ABSOLUTE_RESIDUAL, learner_config={"penalty": penalty})
    _check(0 < args.gamma <= 0.5, "--gamma must lie in (0, 1/2]")
    config = {"k": args.k} if args.k is not None else {}
    return ScoreSpec(kind=CQR, gamma=args.gamma, learner_config=config)


def _pmap(fn, items, threads: int | None) -> list:
    """Order-preserving map, threaded when threads > 1. Results are identical
    either way; queries are independent and all shared state is immutable."""
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def _emit_sets(sets: list[PredictionSet], out: str | None) -> None:
    lines = [
        json.dumps({"query_index": i, **prediction_set_to_json(s)})
        for i, s in enumerate(sets)
    ]
    text = "\n".join(lines) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _check_common(args: argparse.Namespace) -> None:
    _check(0 < args.alpha < 1, "--alpha must lie in (0, 1)")
    _check(args.seed >= 0, "--seed must be a non-negative integer")


def _tau_lam(args: argparse.Namespace) -> tuple[Fraction, int]:
    if args.preset:
        B = args.b
        presets = {
            "leftskewed": (Fraction(B - 1, 2 * B), (B - 1) // 2),
            "bonferroni": (Fraction(B - 1, B), 0),
            "union": (Fraction(0), 0),
        }
        return presets[args.preset]
    _check(args.tau is not None, "--tau (or --preset) is required")
    try:
        tau = Fraction(args.tau)
    except (ValueError, ZeroDivisionError):
        raise ValidationError(f"--tau {args.tau!r} is not a number") from None
    return tau, args.lam


def _cmd_predict(args: argparse.Namespace) -> int:
    _check_common(args)
    data = _load_training(args)
    _check(1 <= args.m <= data.n - 1, f"--m must lie in [1, {data.n - 1}]")
    queries = _load_query(args.query, data.d)
    spec = _score_spec(args, data)
    plan = make_split_plans(data.n, args.m, 1, args.seed)[0]
    fs = fit_score(data, plan, spec)
    q = conformal_quantile(calibration_scores(data, plan, fs), args.alpha)
    sets = _pmap(lambda x: invert_score_threshold(fs, x, q.value), queries, args.threads)
    _emit_sets(sets, args.out)
    return 0


def _cmd_multisplit(args: argparse.Namespace) -> int:
    _check_common(args)
    _check(args.b >= 1, "--b must be >= 1")
    data = _load_training(args)
    _check(1 <= args.m <= data.n - 1, f"--m must lie in [1, {data.n - 1}]")
    queries = _load_query(args.query, data.d)
    tau, lam = _tau_lam(args)
    config = MultiSplitConfig(
        B=args.b,
        tau=tau,
        lam=lam,
        alpha=args.alpha,
        per_split_m=args.m,
        per_split_score=_score_spec(args, data),
        seed=args.seed,
    )
    fitted = fit_multi_split(data, config)
    sets = _pmap(lambda x: multi_split_predict(fitted, x), queries, args.threads)
    _emit_sets(sets, args.out)
    return 0


def _cmd_crossconf(args: argparse.Namespace) -> int:
    _check_common(args)
    data = _load_training(args)
    _check(2 <= args.b <= data.n, f"--b must lie in [2, {data.n}]")
    queries = _load_query(args.query, data.d)
    tau, lam = _tau_lam(args)
    folds = make_folds(data.n, args.b, args.seed)
    config = MultiSplitConfig(
        B=args.b,
        tau=tau,
        lam=lam,
        alpha=args.alpha,
        per_split_m=[len(f) for f in folds.folds],
        per_split_score=_score_spec(args, data),
        seed=args.seed,
    )
    fitted = fit_multi_split(data, config, plans=folds.to_split_plans())
    sets = _pmap(lambda x: multi_split_predict(fitted, x), queries, args.threads)
    _emit_sets(sets, args.out)
    return 0


def _cmd_loo(args: argparse.Namespace) -> int:
    _check_common(args)
    data = _load_training(args)
    queries = _load_query(args.query, data.d)
    spec = _score_spec(args, data)
    _emit_sets(loo_conformal_batch(data, spec, args.alpha, queries), args.out)
    return 0


def _cmd_jackknife(args: argparse.Namespace) -> int:
    _check_common(args)
    data = _load_training(args)
    queries = _load_query(args.query, data.d)
    spec = _score_spec(args, data)
    _check(spec.kind == ABSOLUTE_RESIDUAL, "jackknife supports the residual score only")
    penalty = float(spec.learner_config["penalty"])
    _emit_sets(jackknife_plus_batch(data, args.alpha, queries, penalty=penalty), args.out)
    return 0


def _cmd_experiment(args: argparse.Namespace) -> int:
    _check_common(args)
    _check(args.n_train >= 2, "--n-train must be >= 2")
    _check(args.reps >= 1, "--reps must be >= 1")
    methods = tuple(tok.strip() for tok in args.methods.split(",") if tok.strip())
    _check(bool(methods), "--methods must name at least one method")
    for tok in methods:  # validate tokens before any work starts
        resolve_method(tok, B=args.b, m=args.m, alpha=args.alpha)
    config = ExperimentConfig(
        dataset_path=args.data,
        n_train=args.n_train,
        alpha=args.alpha,
        B=args.b,
        m=args.m,
        replications=args.reps,
        methods=methods,
        seed=args.seed,
        standardize=args.standardize,
        response_col=_response_col(args.response_col),
        strict_crime=args.strict_crime,
    )
    records = run_experiment(config, threads=args.threads)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = [
        write_records_csv(records, out_dir / "records.csv"),
        write_summary_csv(summarize(records), out_dir / "summary.csv"),
        write_summary_json(summarize(records), out_dir / "summary.json"),
    ]
    if args.figures:
        from .report import render_experiment_figures

        paths.extend(render_experiment_figures(records, out_dir, args.alpha))
    for row in summarize(records):
        print(
            f"{row.method:>22}  coverage mean {row.cov_mean:.3f} "
            f"(median {row.cov_median:.3f})  width mean {row.width_mean:.3f}"
        )
    print("wrote: " + ", ".join(str(p) for p in paths))
    return 0


def _cmd_simulate(args: argparse.Namespace) -> int:
    _check_common(args)
    _check(args.reps >= 100, "--reps must be >= 100")
    _check(args.d >= 1, "--d must be >= 1")
    _check(args.n >= 2, "--n must be >= 2")
    _check(args.noise_sd >= 0, "--noise-sd must be >= 0")
    dgp = LinearGaussianDGP(d=args.d, n=args.n, noise_sd=args.noise_sd, coef_seed=args.coef_seed)
    m = args.m if args.m is not None else args.n // 2
    _check(1 <= m <= args.n - 1, f"--m must lie in [1, {args.n - 1}]")
    method = resolve_method(args.method, B=args.b, m=m, alpha=args.alpha)
    estimate = simulate_coverage(dgp, method, args.alpha, args.reps, args.seed)
    print(estimate)
    return 0


def _add_data_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", required=True, help="training CSV with a header row")
    p.add_argument(
        "--response-col",
        default="ViolentCrimesPerPop",
        help="response column name or 0-based index (default: %(default)s)",
    )


def _add_predict_flags(p: argparse.ArgumentParser) -> None:
    _add_data_flags(p)
    p.add_argument("--query", required=True, help="CSV of query points (feature columns only)")
    p.add_argument("--alpha", type=float, default=0.1, help="miscoverage level in (0, 1)")
    p.add_argument("--score", choices=["residual", "cqr"], default="residual")
    p.add_argument("--gamma", type=float, default=0.1, help="cqr lower-quantile level in (0, 1/2]")
    p.add_argument("--penalty", default="auto",
                   help="ridge penalty; 'auto' uses 0.001 * (largest singular value)^2")
    p.add_argument("--k", type=int, default=None, help="cqr neighbor count (default: ceil(sqrt(train size)))")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="output file for JSON lines (default: stdout)")
    p.add_argument("--threads", type=int, default=os.cpu_count(), help="worker threads")


def _add_vote_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--tau", default=None,
                   help="vote threshold in [0, (B-1)/B]; decimal or rational text (e.g. 0.5, 25/51)")
    p.add_argument("--lambda", dest="lam", type=int, default=0, help="smoothing parameter (non-negative integer)")
    p.add_argument("--preset", choices=["leftskewed", "bonferroni", "union"], default=None,
                   help="named (tau, lambda) configuration computed from B")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="multisplit",
        description="Split and multi-split conformal prediction sets, experiments, and simulations.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("predict", help="single-split conformal sets for query points")
    _add_predict_flags(p)
    p.add_argument("--m", type=int, required=True, help="calibration set size")
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("multisplit", help="multi-split conformal sets for query points")
    _add_predict_flags(p)
    p.add_argument("--m", type=int, required=True, help="calibration set size per split")
    p.add_argument("--b", type=int, required=True, help="number of splits")
    _add_vote_flags(p)
    p.set_defaults(func=_cmd_multisplit)

    p = sub.add_parser("crossconf", help="cross-conformal sets (fold-complement splits)")
    _add_predict_flags(p)
    p.add_argument("--b", type=int, required=True, help="number of folds")
    _add_vote_flags(p)
    p.set_defaults(func=_cmd_crossconf)

    p = sub.add_parser("loo", help="leave-one-out conformal sets (coverage 1 - 2*alpha)")
    _add_predict_flags(p)
    p.set_defaults(func=_cmd_loo)

    p = sub.add_parser("jackknife", help="jackknife+ intervals (coverage 1 - 2*alpha)")
    _add_predict_flags(p)
    p.set_defaults(func=_cmd_jackknife)

    p = sub.add_parser("experiment", help="train/test benchmark with CSV + figure outputs")
    _add_data_flags(p)
    p.add_argument("--n-train", type=int, default=200)
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--b", type=int, default=51)
    p.add_argument("--m", type=int, default=99)
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--methods", default=",".join(NAMED_METHODS),
                   help="comma-separated method names (custom:TAU:LAM allowed)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--standardize", action=argparse.BooleanOptionalAction, default=True,
                   help="standardize features with training-fold statistics")
    p.add_argument("--strict-crime", action="store_true",
                   help="require exactly 99 feature columns after filtering")
    p.add_argument("--figures", action=argparse.BooleanOptionalAction, default=True,
                   help="render coverage/width boxplots next to the CSVs")
    p.add_argument("--threads", type=int, default=os.cpu_count(),
                   help="replication worker threads")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_experiment)

    p = sub.add_parser("simulate", help="Monte Carlo coverage on synthetic linear-Gaussian data")
    p.add_argument("--method", default="single",
                   help="single, leftskewed, jackknife_plus, tau_*, loo, or custom:TAU:LAM")
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--reps", type=int, default=2000)
    p.add_argument("--d", type=int, default=5)
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--m", type=int, default=None, help="calibration size (default: n // 2)")
    p.add_argument("--b", type=int, default=50, help="number of splits for multi-split methods")
    p.add_argument("--noise-sd", type=float, default=1.0)
    p.add_argument("--coef-seed", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_simulate)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code == 0 else 1
    try:
        return args.func(args)
    except ValidationError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except MultiSplitError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # runtime failures map to exit 2 with a short message
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
