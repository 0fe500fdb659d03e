"""Matplotlib figures for experiment outputs, written next to the CSV tables."""

from __future__ import annotations

import math
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .bench import RepRecord


def _grouped(records: Sequence[RepRecord]) -> dict[str, list[RepRecord]]:
    groups: dict[str, list[RepRecord]] = {}
    for rec in records:
        if not math.isnan(rec.coverage):
            groups.setdefault(rec.method, []).append(rec)
    return groups


def render_experiment_figures(
    records: Sequence[RepRecord], out_dir: str | Path, alpha: float
) -> list[Path]:
    """Coverage and width boxplots per method; returns the written paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    groups = _grouped(records)
    labels = list(groups)
    written = []

    fig, ax = plt.subplots(figsize=(1.2 * max(5, len(labels)), 4))
    ax.boxplot([[r.coverage for r in groups[m]] for m in labels], tick_labels=labels)
    ax.axhline(1 - alpha, color="red", linestyle="--", linewidth=1, label=f"target {1 - alpha:g}")
    ax.set_ylabel("empirical coverage")
    ax.legend(loc="lower right")
    fig.autofmt_xdate(rotation=30)
    path = out_dir / "coverage_boxplot.png"
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots(figsize=(1.2 * max(5, len(labels)), 4))
    finite = [[r.width for r in groups[m] if math.isfinite(r.width)] for m in labels]
    n_inf = [sum(1 for r in groups[m] if math.isinf(r.width)) for m in labels]
    shown = [
        f"{m}\n({k} unbounded)" if k else m for m, k in zip(labels, n_inf)
    ]
    ax.boxplot([vals if vals else [0.0] for vals in finite], tick_labels=shown)
    ax.set_ylabel("mean interval width")
    fig.autofmt_xdate(rotation=30)
    path = out_dir / "width_boxplot.png"
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    written.append(path)
    return written
