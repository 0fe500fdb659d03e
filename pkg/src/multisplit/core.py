"""Core value types: intervals, prediction sets, datasets, and split plans.

All types are immutable after construction and safe to share across threads.
Split generation is a pure function of (n, m, B, seed) backed by NumPy's
PCG64 generator, so plans are reproducible across runs and platforms.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np


class MultiSplitError(Exception):
    """Base class for errors raised by this package."""


class ValidationError(MultiSplitError):
    """Invalid input: sizes, levels, malformed files, bad configuration."""


class NumericalError(MultiSplitError):
    """Numerical failure: singular systems, NaN scores."""


_MISSING_MARKERS = frozenset({"", "?", "NA", "N/A", "NaN", "nan"})


@dataclass(frozen=True)
class Interval:
    """Closed interval [lo, hi]; endpoints may be -inf / +inf."""

    lo: float
    hi: float

    def __post_init__(self) -> None:
        lo, hi = float(self.lo), float(self.hi)
        if math.isnan(lo) or math.isnan(hi):
            raise ValidationError("interval endpoints must not be NaN")
        if lo > hi:
            raise ValidationError(f"interval requires lo <= hi, got [{lo}, {hi}]")
        if math.isinf(lo) and lo == hi:
            raise ValidationError("interval cannot be a point at infinity")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def contains(self, y: float) -> bool:
        return self.lo <= y <= self.hi

    @property
    def length(self) -> float:
        return self.hi - self.lo


@dataclass(frozen=True)
class PredictionSet:
    """Finite union of disjoint closed intervals, kept sorted and maximally merged.

    The empty tuple represents the empty set. ``meta`` carries optional
    provenance (threshold, centers) and never takes part in equality.
    """

    intervals: tuple[Interval, ...] = ()
    meta: dict[str, Any] | None = field(default=None, compare=False, repr=False)

    def __post_init__(self) -> None:
        ivs = tuple(self.intervals)
        for a, b in zip(ivs, ivs[1:]):
            if not a.hi < b.lo:
                raise ValidationError(
                    "prediction set intervals must be sorted, disjoint and merged"
                )
        object.__setattr__(self, "intervals", ivs)

    @classmethod
    def from_intervals(
        cls,
        intervals: Iterable[Interval | tuple[float, float]],
        meta: dict[str, Any] | None = None,
    ) -> "PredictionSet":
        """Build a set from arbitrary closed intervals, merging any that touch."""
        ivs = sorted(
            (iv if isinstance(iv, Interval) else Interval(*iv) for iv in intervals),
            key=lambda iv: (iv.lo, iv.hi),
        )
        merged: list[Interval] = []
        for iv in ivs:
            if merged and iv.lo <= merged[-1].hi:
                if iv.hi > merged[-1].hi:
                    merged[-1] = Interval(merged[-1].lo, iv.hi)
            else:
                merged.append(iv)
        return cls(tuple(merged), meta=meta)

    @classmethod
    def empty(cls, meta: dict[str, Any] | None = None) -> "PredictionSet":
        return cls((), meta=meta)

    @classmethod
    def whole_line(cls, meta: dict[str, Any] | None = None) -> "PredictionSet":
        return cls((Interval(-math.inf, math.inf),), meta=meta)

    def contains(self, y: float) -> bool:
        return any(iv.contains(y) for iv in self.intervals)

    def is_subset_of(self, other: "PredictionSet") -> bool:
        """Exact containment check: every interval lies inside one of other's."""
        return all(
            any(o.lo <= iv.lo and iv.hi <= o.hi for o in other.intervals)
            for iv in self.intervals
        )

    @property
    def is_empty(self) -> bool:
        return not self.intervals

    def total_width(self) -> float:
        """Total Lebesgue measure: sum of lengths, +inf if any piece is unbounded."""
        return float(sum(iv.length for iv in self.intervals))


def set_membership(s: PredictionSet, y: float) -> bool:
    """True iff some interval of ``s`` contains ``y`` (closed endpoints)."""
    return s.contains(y)


def _endpoint_to_json(x: float) -> float | str:
    if x == math.inf:
        return "inf"
    if x == -math.inf:
        return "-inf"
    return x


def _endpoint_from_json(x: float | str) -> float:
    if isinstance(x, str):
        if x == "inf":
            return math.inf
        if x == "-inf":
            return -math.inf
        raise ValidationError(f"unknown endpoint sentinel {x!r}")
    return float(x)


def prediction_set_to_json(s: PredictionSet) -> dict[str, Any]:
    """JSON-safe form; infinite endpoints become the strings "-inf"/"inf"."""
    return {
        "intervals": [
            [_endpoint_to_json(iv.lo), _endpoint_to_json(iv.hi)] for iv in s.intervals
        ]
    }


def prediction_set_from_json(obj: dict[str, Any]) -> PredictionSet:
    return PredictionSet.from_intervals(
        (_endpoint_from_json(lo), _endpoint_from_json(hi))
        for lo, hi in obj["intervals"]
    )


@dataclass(frozen=True)
class Dataset:
    """Feature matrix (n x d) with a numeric response vector of length n."""

    features: np.ndarray
    response: np.ndarray
    column_names: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        X = np.array(self.features, dtype=float, copy=True)
        y = np.array(self.response, dtype=float, copy=True)
        if X.ndim != 2:
            raise ValidationError(f"features must be 2-d, got shape {X.shape}")
        if y.ndim != 1 or y.shape[0] != X.shape[0]:
            raise ValidationError(
                f"response length {y.shape} does not match {X.shape[0]} feature rows"
            )
        if not (np.isfinite(X).all() and np.isfinite(y).all()):
            raise ValidationError("dataset contains non-finite values")
        if self.column_names is not None:
            names = tuple(self.column_names)
            if len(names) != X.shape[1]:
                raise ValidationError("column_names length does not match feature count")
            object.__setattr__(self, "column_names", names)
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "response", y)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def subset(self, rows: Sequence[int] | np.ndarray) -> "Dataset":
        idx = np.asarray(rows, dtype=int)
        return Dataset(self.features[idx], self.response[idx], self.column_names)


@dataclass(frozen=True)
class SplitPlan:
    """Partition of 0..n-1 into a training part and a calibration part."""

    train_idx: tuple[int, ...]
    calib_idx: tuple[int, ...]

    def __post_init__(self) -> None:
        train = tuple(int(i) for i in self.train_idx)
        calib = tuple(int(i) for i in self.calib_idx)
        if not train or not calib:
            raise ValidationError("both split parts must be non-empty")
        n = len(train) + len(calib)
        if sorted(train + calib) != list(range(n)):
            raise ValidationError("split parts must partition 0..n-1 exactly")
        object.__setattr__(self, "train_idx", train)
        object.__setattr__(self, "calib_idx", calib)

    @property
    def n(self) -> int:
        return len(self.train_idx) + len(self.calib_idx)

    @property
    def m(self) -> int:
        return len(self.calib_idx)


def _plans_for_sizes(
    n: int, calib_sizes: Sequence[int], seed: int | np.random.SeedSequence
) -> list[SplitPlan]:
    # One PCG64 stream; plan b is the b-th permutation drawn from it, so a
    # homogeneous prefix of sizes matches make_split_plans(n, m, B, seed).
    for m in calib_sizes:
        if not 1 <= m <= n - 1:
            raise ValidationError(f"calibration size m={m} must satisfy 1 <= m <= n-1={n - 1}")
    rng = np.random.default_rng(seed)
    plans = []
    for m in calib_sizes:
        perm = rng.permutation(n)
        plans.append(
            SplitPlan(
                train_idx=tuple(sorted(int(i) for i in perm[m:])),
                calib_idx=tuple(sorted(int(i) for i in perm[:m])),
            )
        )
    return plans


def make_split_plans(
    n: int, m: int, B: int, seed: int | np.random.SeedSequence
) -> list[SplitPlan]:
    """Draw B independent uniform partitions of 0..n-1 with |calibration| = m.

    Plan b takes the first m entries of the b-th permutation from a PCG64
    stream seeded with ``seed``; indices are then sorted in natural order.
    Deterministic given (n, m, B, seed).
    """
    if B < 1:
        raise ValidationError(f"number of splits B={B} must be >= 1")
    return _plans_for_sizes(n, [m] * B, seed)


def load_dataset(
    path: str | Path,
    response: str | int,
    missing_markers: frozenset[str] = _MISSING_MARKERS,
) -> Dataset:
    """Load a headered CSV into a Dataset.

    ``response`` selects the response column by name or 0-based index; every
    remaining column is a feature and must be numeric. Rows with missing or
    non-numeric cells are rejected with a row-numbered error.
    """
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"no such file: {path}")
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{path}: empty file, expected a header row") from None
        header = [h.strip() for h in header]
        if isinstance(response, int):
            if not 0 <= response < len(header):
                raise ValidationError(f"response column index {response} out of range")
            resp_idx = response
        else:
            try:
                resp_idx = header.index(response)
            except ValueError:
                raise ValidationError(
                    f"response column {response!r} not found in header"
                ) from None
        feat_cols = [j for j in range(len(header)) if j != resp_idx]
        feats: list[list[float]] = []
        resp: list[float] = []
        for rownum, row in enumerate(reader, start=1):
            if len(row) != len(header):
                raise ValidationError(
                    f"row {rownum}: expected {len(header)} cells, got {len(row)}"
                )
            parsed = []
            for j in feat_cols + [resp_idx]:
                cell = row[j].strip()
                if cell in missing_markers:
                    raise ValidationError(
                        f"row {rownum}: missing value in column {header[j]!r}"
                    )
                try:
                    parsed.append(float(cell))
                except ValueError:
                    raise ValidationError(
                        f"row {rownum}: non-numeric value {cell!r} in column {header[j]!r}"
                    ) from None
            feats.append(parsed[:-1])
            resp.append(parsed[-1])
    if not feats:
        raise ValidationError(f"{path}: no data rows")
    return Dataset(
        features=np.asarray(feats, dtype=float),
        response=np.asarray(resp, dtype=float),
        column_names=tuple(header[j] for j in feat_cols),
    )
