"""Growth plans and snapshot emission for the three experimental regimes.

* multi-aspect: every mode may grow; snapshot ``t`` has dims
  ``min(start + t * step, full)``.
* streaming: only ``stream_mode`` grows, one slice per step.
* batch: the full dataset is emitted ``passes`` times.

Each observation is delivered in the first snapshot whose shape contains
it, so the deltas partition the dataset.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .model import SideInfoSet
from .optimizer import DeltaBlock
from .tensor import SparseTensor, check_shape

__all__ = ["GrowthPlan", "SnapshotView", "plan_steps", "snapshot_dims", "arrival_steps",
           "emit_snapshots"]

REGIMES = ("multi-aspect", "streaming", "batch")


@dataclass(frozen=True)
class GrowthPlan:
    regime: str
    start_dims: tuple[int, ...]
    step_increments: tuple[int, ...]
    full_dims: tuple[int, ...]
    stream_mode: int | None = None
    passes: int = 1

    def __post_init__(self) -> None:
        if self.regime not in REGIMES:
            raise ValueError(f"unknown regime {self.regime!r}; expected one of {REGIMES}")
        full = check_shape(self.full_dims)
        start = check_shape(self.start_dims)
        inc = tuple(int(v) for v in self.step_increments)
        if not len(start) == len(inc) == len(full):
            raise ValueError("start_dims, step_increments and full_dims must have equal length")
        if any(s > f for s, f in zip(start, full)):
            raise ValueError(f"start_dims {start} exceed full_dims {full}")
        if any(v < 0 for v in inc):
            raise ValueError(f"step increments must be >= 0, got {inc}")
        for n, (s, v, f) in enumerate(zip(start, inc, full)):
            if s < f and v == 0:
                raise ValueError(f"mode {n} starts below full size but has zero increment")
        if self.regime == "batch" and self.passes < 1:
            raise ValueError(f"batch passes must be >= 1, got {self.passes}")
        object.__setattr__(self, "start_dims", start)
        object.__setattr__(self, "step_increments", inc)
        object.__setattr__(self, "full_dims", full)

    @classmethod
    def multi_aspect(cls, start: Sequence[int], step: Sequence[int], full: Sequence[int]) -> "GrowthPlan":
        if start != full and not any(step):
            raise ValueError("multi-aspect plan needs at least one positive increment")
        return cls("multi-aspect", tuple(start), tuple(step), tuple(full))

    @classmethod
    def streaming(cls, full: Sequence[int], stream_mode: int) -> "GrowthPlan":
        full = tuple(full)
        if not 0 <= stream_mode < len(full):
            raise ValueError(f"stream mode {stream_mode} out of range for {len(full)} modes")
        start = tuple(1 if n == stream_mode else d for n, d in enumerate(full))
        step = tuple(1 if n == stream_mode else 0 for n in range(len(full)))
        return cls("streaming", start, step, full, stream_mode=stream_mode)

    @classmethod
    def batch(cls, full: Sequence[int], passes: int) -> "GrowthPlan":
        full = tuple(full)
        return cls("batch", full, (0,) * len(full), full, passes=int(passes))


@dataclass
class SnapshotView:
    step_index: int
    dims: tuple[int, ...]
    delta: DeltaBlock
    side_view: SideInfoSet


def plan_steps(plan: GrowthPlan) -> int:
    """Number of snapshots the plan emits (step 0 included)."""
    if plan.regime == "batch":
        return plan.passes
    last = 0
    for s, v, f in zip(plan.start_dims, plan.step_increments, plan.full_dims):
        if s < f:
            last = max(last, -(-(f - s) // v))
    return last + 1


def snapshot_dims(plan: GrowthPlan, t: int) -> tuple[int, ...]:
    if plan.regime == "batch":
        return plan.full_dims
    return tuple(min(s + t * v, f) for s, v, f in
                 zip(plan.start_dims, plan.step_increments, plan.full_dims))


def arrival_steps(indices: np.ndarray, plan: GrowthPlan) -> np.ndarray:
    """First snapshot index whose shape contains each row of ``indices``."""
    indices = np.asarray(indices, dtype=np.int64)
    out = np.zeros(indices.shape[0], dtype=np.int64)
    if plan.regime == "batch":
        return out
    for n, (s, v) in enumerate(zip(plan.start_dims, plan.step_increments)):
        over = indices[:, n] + 1 - s
        if v == 0:
            if np.any(over > 0):
                raise ValueError(f"mode {n} has indices outside the fixed size {s}")
            continue
        # ceil(over / v) for over > 0, else 0
        out = np.maximum(out, np.where(over > 0, -(-over // v), 0))
    return out


def emit_snapshots(dataset: SparseTensor, side: SideInfoSet, plan: GrowthPlan) -> Iterator[SnapshotView]:
    """Yield one :class:`SnapshotView` per step of ``plan``."""
    if tuple(dataset.shape) != plan.full_dims:
        raise ValueError(f"dataset shape {dataset.shape} does not match plan full dims {plan.full_dims}")
    if side.dims != plan.full_dims:
        raise ValueError(f"side information rows {side.dims} do not match plan full dims {plan.full_dims}")
    nsteps = plan_steps(plan)
    if plan.regime == "batch":
        delta = DeltaBlock(dataset, [None] * dataset.ndim)
        for t in range(nsteps):
            yield SnapshotView(t, plan.full_dims, delta, side)
        return

    arrive = arrival_steps(dataset.indices, plan)
    order = np.argsort(arrive, kind="stable")
    bounds = np.searchsorted(arrive[order], np.arange(nsteps + 1), side="left")
    prev = (0,) * dataset.ndim
    for t in range(nsteps):
        dims = snapshot_dims(plan, t)
        sel = np.sort(order[bounds[t]:bounds[t + 1]])
        obs = dataset.select(sel, shape=dims)
        new_rows = [s.row_block(p, d) if d > p else None for s, p, d in zip(side, prev, dims)]
        yield SnapshotView(t, dims, DeltaBlock(obs, new_rows), side.truncate(dims))
        prev = dims
