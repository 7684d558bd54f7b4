"""RMSE, cluster purity and CSV output."""

from __future__ import annotations

import csv
import math
import os
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .model import SideInfoSet, TuckerModel, predict, projected_factors
from .tensor import SparseTensor

__all__ = [
    "MetricsRecord",
    "ClusterReport",
    "rmse",
    "average_rmse",
    "top_w",
    "cluster_purity",
    "purity",
    "emit_csv",
    "read_csv",
    "CSV_HEADER",
]

CSV_HEADER = ("step", "train_rmse", "test_rmse", "objective", "elapsed_ms")


@dataclass
class MetricsRecord:
    step: int
    train_rmse: float | None = None
    test_rmse: float | None = None
    objective: float | None = None
    elapsed_ms: float | None = None
    test_count: int = 0


@dataclass
class ClusterReport:
    mode: int
    w: int
    per_cluster: list[tuple[int, list[int], float]] = field(default_factory=list)
    average_purity: float = 0.0


def rmse(model: TuckerModel, side: SideInfoSet, entries: SparseTensor,
         projected: list[np.ndarray] | None = None) -> float:
    if entries.nnz == 0:
        raise ValueError("rmse of an empty entry set is undefined")
    err = entries.values - predict(model, side, entries.indices, projected)
    return math.sqrt(float(err @ err) / entries.nnz)


def average_rmse(records: Iterable[MetricsRecord], weighted: bool = False) -> float:
    """Mean test RMSE over steps that had test entries.

    With ``weighted=True`` each step counts in proportion to its test-set size.
    """
    pairs = [(r.test_rmse, r.test_count) for r in records if r.test_rmse is not None]
    if not pairs:
        return float("nan")
    vals = np.array([p[0] for p in pairs])
    if weighted:
        w = np.array([p[1] for p in pairs], dtype=float)
        return float(np.sum(vals * w) / np.sum(w))
    return float(np.mean(vals))


def top_w(column: np.ndarray, w: int) -> list[int]:
    """Rows of the ``w`` largest values; ties go to the lower row index."""
    column = np.asarray(column)
    if not 1 <= w <= column.shape[0]:
        raise ValueError(f"w must be in [1, {column.shape[0]}], got {w}")
    order = np.lexsort((np.arange(column.shape[0]), -column))
    return [int(i) for i in order[:w]]


def cluster_purity(item_labels: Sequence[Sequence[str]]) -> float:
    """Fraction of a cluster carrying its most common category.

    Every item counts once for each category it carries.
    """
    counts = Counter()
    for labels in item_labels:
        counts.update(set(labels))
    if not item_labels:
        raise ValueError("empty cluster")
    return (max(counts.values()) if counts else 0) / len(item_labels)


def purity(model: TuckerModel, side: SideInfoSet, mode: int,
           labels: Mapping[int, Sequence[str]], w: int) -> ClusterReport:
    """Purity of the top-``w`` clusters of every column of ``A_mode @ U_mode``."""
    p = projected_factors(model, side)[mode]
    if w > p.shape[0]:
        raise ValueError(f"w={w} exceeds the {p.shape[0]} items of mode {mode}")
    report = ClusterReport(mode=mode, w=w)
    for col in range(p.shape[1]):
        items = top_w(p[:, col], w)
        report.per_cluster.append((col, items, cluster_purity([labels.get(i, ()) for i in items])))
    report.average_purity = float(np.mean([c[2] for c in report.per_cluster]))
    return report


def _fmt(v, spec):
    return "" if v is None or (isinstance(v, float) and not math.isfinite(v)) else format(v, spec)


def emit_csv(records: Iterable[MetricsRecord], path: str | os.PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(CSV_HEADER)
        for r in records:
            elapsed = None if r.elapsed_ms is None else int(round(r.elapsed_ms))
            out.writerow([r.step, _fmt(r.train_rmse, ".6f"), _fmt(r.test_rmse, ".6f"),
                          _fmt(r.objective, ".6f"), _fmt(elapsed, "d")])


def read_csv(path: str | os.PathLike) -> list[MetricsRecord]:
    def num(s, cast=float):
        return cast(s) if s != "" else None

    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return [MetricsRecord(step=int(r["step"]), train_rmse=num(r["train_rmse"]),
                          test_rmse=num(r["test_rmse"]), objective=num(r["objective"]),
                          elapsed_ms=num(r["elapsed_ms"]))
            for r in rows]
