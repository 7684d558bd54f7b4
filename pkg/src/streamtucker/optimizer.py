"""Gradients, projected updates and the per-time-step inner loop.

The data part of every gradient is accumulated in a single pass over the
observed entries (see :mod:`streamtucker.kernels`); the Kronecker products
of the projected factors are never materialised.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import kernels
from .model import (
    Hyperparams,
    SideInfoSet,
    TuckerModel,
    objective,
    projected_factors,
)
from .tensor import SparseTensor

__all__ = [
    "GradientBuffers",
    "DeltaBlock",
    "StepResult",
    "residual_at_observed",
    "gradients",
    "apply_update",
    "step",
]


@dataclass
class GradientBuffers:
    d_core: np.ndarray
    d_factors: list[np.ndarray]


@dataclass
class DeltaBlock:
    """Newly observed entries and newly exposed side-information rows."""

    observations: SparseTensor
    new_side_rows: list[np.ndarray | None] = field(default_factory=list)


@dataclass
class StepResult:
    objective: float
    elapsed_ms: float
    grad_ms: float
    iterations: int


def _check(model: TuckerModel, side: SideInfoSet, block: SparseTensor) -> None:
    if len(side) != model.ndim or block.ndim != model.ndim:
        raise ValueError(
            f"order mismatch: model {model.ndim}, side {len(side)}, data {block.ndim}"
        )
    if tuple(block.shape) != side.dims:
        raise ValueError(f"data shape {block.shape} does not match side information rows {side.dims}")
    if side.feature_dims != tuple(u.shape[0] for u in model.factors):
        raise ValueError(
            f"side widths {side.feature_dims} do not match factor rows "
            f"{tuple(u.shape[0] for u in model.factors)}"
        )


def residual_at_observed(model: TuckerModel, side: SideInfoSet, block: SparseTensor,
                         *, nthreads: int = 1, backend: str | None = None) -> SparseTensor:
    """``x - prediction`` on the observed index set of ``block``."""
    _check(model, side, block)
    projected = projected_factors(model, side)
    pred = kernels.predict_observed(block.indices, projected, model.core,
                                    nthreads=nthreads, backend=backend)
    return SparseTensor(block.shape, block.indices, block.values - pred)


def _factor_grads(block, resid, h, projected, side, model, lams):
    out = []
    off = 0
    for n, (p, s, u) in enumerate(zip(projected, side, model.factors)):
        rows, r = p.shape
        dp = np.empty((rows, r))
        col_idx = block.indices[:, n]
        for j in range(r):
            dp[:, j] = np.bincount(col_idx, weights=resid * h[:, off + j], minlength=rows)
        off += r
        out.append(-2.0 * s.project_t(dp) + 2.0 * lams[n] * u)
    return out


def _core_grad(core_sum, model, hp):
    return -2.0 * core_sum.reshape(model.ranks) + 2.0 * hp.lambda_g * model.core


def gradients(model: TuckerModel, side: SideInfoSet, block: SparseTensor, hp: Hyperparams,
              *, nthreads: int = 1, backend: str | None = None) -> GradientBuffers:
    """Gradient of the regularised squared error at the current variables."""
    _check(model, side, block)
    lams = hp.lambdas(model.ndim)
    projected = projected_factors(model, side)
    resid, h, core_sum = kernels.sweep(block.indices, block.values, projected, model.core,
                                       want_h=True, want_core=True,
                                       nthreads=nthreads, backend=backend)
    return GradientBuffers(
        d_core=_core_grad(core_sum, model, hp),
        d_factors=_factor_grads(block, resid, h, projected, side, model, lams),
    )


def _project_nonneg(a: np.ndarray) -> np.ndarray:
    return np.where(a > 0, a, 0.0)


def _update_factors(model, d_factors, hp):
    for n, du in enumerate(d_factors):
        u = model.factors[n] - hp.gamma * du
        model.factors[n] = _project_nonneg(u) if hp.nonnegative else u


def _update_core(model, d_core, hp):
    g = model.core - hp.gamma * d_core
    model.core = _project_nonneg(g) if hp.nonnegative else g


def apply_update(model: TuckerModel, grads: GradientBuffers, hp: Hyperparams) -> TuckerModel:
    """Gradient step on all variables, projected onto ``>= 0`` in nonnegative mode."""
    if grads.d_core.shape != model.core.shape or any(
        d.shape != u.shape for d, u in zip(grads.d_factors, model.factors)
    ):
        raise ValueError("gradient shapes do not match the model")
    _update_factors(model, grads.d_factors, hp)
    _update_core(model, grads.d_core, hp)
    return model


def step(model: TuckerModel, side: SideInfoSet, delta: DeltaBlock | SparseTensor,
         hp: Hyperparams, *, on_update: Callable[[TuckerModel], None] | None = None,
         nthreads: int = 1, deterministic: bool = True,
         backend: str | None = None) -> StepResult:
    """Run ``hp.inner_steps`` iterations on one delta block, updating ``model`` in place.

    Each iteration computes the residual, the factor gradients, updates the
    factors, then computes the core gradient and updates the core. The core
    gradient uses a residual recomputed with the updated factors unless
    ``hp.stale_core_residual`` is set, in which case both gradients come from
    the iterate at the top of the loop.
    """
    block = delta.observations if isinstance(delta, DeltaBlock) else delta
    _check(model, side, block)
    lams = hp.lambdas(model.ndim)
    t0 = time.perf_counter()
    grad_s = 0.0
    idx, vals = block.indices, block.values
    for _ in range(hp.inner_steps):
        g0 = time.perf_counter()
        projected = projected_factors(model, side)
        resid, h, core_sum = kernels.sweep(idx, vals, projected, model.core, want_h=True,
                                           want_core=hp.stale_core_residual,
                                           nthreads=nthreads, deterministic=deterministic,
                                           backend=backend)
        d_factors = _factor_grads(block, resid, h, projected, side, model, lams)
        grad_s += time.perf_counter() - g0

        _update_factors(model, d_factors, hp)
        if on_update is not None:
            on_update(model)

        g0 = time.perf_counter()
        if not hp.stale_core_residual:
            projected = projected_factors(model, side)
            _, _, core_sum = kernels.sweep(idx, vals, projected, model.core, want_h=False,
                                           want_core=True, nthreads=nthreads,
                                           deterministic=deterministic, backend=backend)
        d_core = _core_grad(core_sum, model, hp)
        grad_s += time.perf_counter() - g0

        _update_core(model, d_core, hp)
        if on_update is not None:
            on_update(model)
    obj = objective(model, side, block, hp)
    elapsed = (time.perf_counter() - t0) * 1e3
    return StepResult(objective=obj, elapsed_ms=elapsed, grad_ms=grad_s * 1e3,
                      iterations=hp.inner_steps)
