"""Drivers that tie growth plans, the optimizer and the metrics together."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .evaluation import ClusterReport, MetricsRecord, purity, rmse
from .model import Hyperparams, SideInfoSet, TuckerModel, init_model, projected_factors
from .optimizer import step
from .streaming import GrowthPlan, arrival_steps, emit_snapshots, plan_steps
from .tensor import SparseTensor

logger = logging.getLogger(__name__)

__all__ = ["NumericalError", "RunResult", "run_plan", "run_cluster"]


class NumericalError(ArithmeticError):
    """The objective became non-finite."""


@dataclass
class RunResult:
    model: TuckerModel
    records: list[MetricsRecord]
    grad_ms: list[float] = field(default_factory=list)


def _cumulative(entries: SparseTensor, plan: GrowthPlan):
    arrive = arrival_steps(entries.indices, plan)
    cache = {}

    def at(t, dims):
        key = (int(np.count_nonzero(arrive <= t)), tuple(dims))
        if key not in cache:
            cache.clear()
            cache[key] = entries.select(arrive <= t, shape=dims)
        return cache[key]

    return at


def run_plan(train: SparseTensor, side: SideInfoSet, plan: GrowthPlan, ranks: Sequence[int],
             hp: Hyperparams, *, test: SparseTensor | None = None, timing: bool = True,
             nthreads: int = 1, deterministic: bool = True, backend: str | None = None,
             on_update: Callable[[TuckerModel], None] | None = None,
             model: TuckerModel | None = None, eval_every: int = 1) -> RunResult:
    """Run the incremental optimizer over every snapshot of ``plan``.

    Train and test RMSE at step ``t`` are computed over all train/test
    entries inside the snapshot shape at ``t``. With ``eval_every > 1`` they
    are only computed on every ``eval_every``-th step and the last one, and
    left absent elsewhere.
    """
    if eval_every < 1:
        raise ValueError(f"eval_every must be >= 1, got {eval_every}")
    if model is None:
        model = init_model(ranks, side, hp)
    train_at = _cumulative(train, plan)
    test_at = _cumulative(test, plan) if test is not None else None
    records, grad_ms = [], []
    last = plan_steps(plan) - 1
    for snap in emit_snapshots(train, side, plan):
        res = step(model, snap.side_view, snap.delta, hp, on_update=on_update,
                   nthreads=nthreads, deterministic=deterministic, backend=backend)
        if not math.isfinite(res.objective):
            raise NumericalError(f"objective became {res.objective} at step {snap.step_index}")
        grad_ms.append(res.grad_ms)
        rec = MetricsRecord(step=snap.step_index, objective=res.objective,
                            elapsed_ms=res.elapsed_ms if timing else None)
        records.append(rec)
        if snap.step_index % eval_every and snap.step_index != last:
            continue
        projected = projected_factors(model, snap.side_view)
        seen = train_at(snap.step_index, snap.dims)
        if seen.nnz:
            rec.train_rmse = rmse(model, snap.side_view, seen, projected)
        if test_at is not None:
            held = test_at(snap.step_index, snap.dims)
            if held.nnz:
                rec.test_rmse = rmse(model, snap.side_view, held, projected)
                rec.test_count = held.nnz
        logger.debug("step %d dims %s |delta|=%d obj=%.6g test=%s", snap.step_index, snap.dims,
                     snap.delta.observations.nnz, res.objective, rec.test_rmse)
    return RunResult(model, records, grad_ms)


def run_cluster(data: SparseTensor, side: SideInfoSet, plan: GrowthPlan, ranks: Sequence[int],
                hp: Hyperparams, mode: int, labels: Mapping[int, Sequence[str]], w: int, *,
                nthreads: int = 1, deterministic: bool = True, backend: str | None = None,
                on_update: Callable[[TuckerModel], None] | None = None
                ) -> tuple[TuckerModel, list[ClusterReport]]:
    """Nonnegative run on the full data, with a purity report after every step."""
    if not hp.nonnegative:
        raise ValueError("clustering requires nonnegative=True")
    if w > data.shape[mode]:
        raise ValueError(f"w={w} exceeds the {data.shape[mode]} items of mode {mode}")
    model = init_model(ranks, side, hp)
    reports = []
    for snap in emit_snapshots(data, side, plan):
        res = step(model, snap.side_view, snap.delta, hp, on_update=on_update,
                   nthreads=nthreads, deterministic=deterministic, backend=backend)
        if not math.isfinite(res.objective):
            raise NumericalError(f"objective became {res.objective} at step {snap.step_index}")
        if snap.dims[mode] >= w:
            reports.append(purity(model, snap.side_view, mode, labels, w))
        else:
            reports.append(ClusterReport(mode=mode, w=w, average_purity=float("nan")))
    return model, reports
