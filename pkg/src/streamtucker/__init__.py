"""Incremental inductive Tucker completion for multi-aspect streaming tensors."""

__version__ = "0.1.0"

from .kernels import BACKEND
from .model import (
    DenseSide,
    Hyperparams,
    IdentitySide,
    SideInfoSet,
    SparseSide,
    TuckerModel,
    init_model,
    objective,
    predict_entry,
    projected_factors,
)
from .optimizer import DeltaBlock, GradientBuffers, apply_update, gradients, residual_at_observed, step
from .streaming import GrowthPlan, emit_snapshots, plan_steps
from .tensor import SparseTensor, matricize, mode_n_product, refold, sparse_iter

__all__ = [
    "BACKEND", "DenseSide", "Hyperparams", "IdentitySide", "SideInfoSet", "SparseSide",
    "TuckerModel", "init_model", "objective", "predict_entry", "projected_factors",
    "DeltaBlock", "GradientBuffers", "apply_update", "gradients", "residual_at_observed", "step",
    "GrowthPlan", "emit_snapshots", "plan_steps",
    "SparseTensor", "matricize", "mode_n_product", "refold", "sparse_iter",
]
