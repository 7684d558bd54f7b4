"""Inductive Tucker model with per-mode side information.

An entry ``x[i_1, ..., i_N]`` is modelled as

    sum_j  G[j_1, ..., j_N] * prod_n (A_n U_n)[i_n, j_n]

where ``A_n`` (``I_n x M_n``) is fixed side information for mode ``n`` and
``U_n`` (``M_n x r_n``) and the core ``G`` (``r_1 x ... x r_N``) are learned.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .tensor import SparseTensor, multi_mode_product

__all__ = [
    "SideInfo",
    "IdentitySide",
    "DenseSide",
    "SparseSide",
    "SideInfoSet",
    "TuckerModel",
    "Hyperparams",
    "init_model",
    "projected_factors",
    "predict_entry",
    "predict",
    "objective",
    "reconstruct_dense",
]


class SideInfo:
    """Side-information matrix for one mode (``rows x cols``)."""

    rows: int
    cols: int

    def project(self, u: np.ndarray) -> np.ndarray:
        """Return ``A @ u``."""
        raise NotImplementedError

    def project_t(self, g: np.ndarray) -> np.ndarray:
        """Return ``A.T @ g``."""
        raise NotImplementedError

    def truncate(self, rows: int) -> "SideInfo":
        """Keep the first ``rows`` rows."""
        raise NotImplementedError

    def row_block(self, start: int, stop: int) -> np.ndarray:
        """Dense copy of rows ``start:stop``."""
        return self.to_dense()[start:stop]

    def to_dense(self) -> np.ndarray:
        raise NotImplementedError

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    def _check_truncate(self, rows: int) -> None:
        if not 1 <= rows <= self.rows:
            raise ValueError(f"cannot truncate {self.rows}-row side information to {rows} rows")


@dataclass(frozen=True)
class IdentitySide(SideInfo):
    """Identity side information: ``A = I`` (first ``rows`` rows of ``I_size``)."""

    size: int
    rows: int = -1

    def __post_init__(self) -> None:
        if self.size < 1:
            raise ValueError(f"identity size must be >= 1, got {self.size}")
        if self.rows == -1:
            object.__setattr__(self, "rows", self.size)
        if not 1 <= self.rows <= self.size:
            raise ValueError(f"identity rows must be in [1, {self.size}], got {self.rows}")

    @property
    def cols(self) -> int:
        return self.size

    def project(self, u):
        if u.shape[0] != self.size:
            raise ValueError(f"factor has {u.shape[0]} rows, side information has {self.size} columns")
        return u[: self.rows]

    def project_t(self, g):
        if g.shape[0] != self.rows:
            raise ValueError(f"gradient has {g.shape[0]} rows, expected {self.rows}")
        if self.rows == self.size:
            return g
        out = np.zeros((self.size,) + g.shape[1:])
        out[: self.rows] = g
        return out

    def truncate(self, rows):
        self._check_truncate(rows)
        return IdentitySide(self.size, rows)

    def row_block(self, start, stop):
        out = np.zeros((stop - start, self.size))
        out[np.arange(stop - start), np.arange(start, stop)] = 1.0
        return out

    def to_dense(self):
        return np.eye(self.rows, self.size)


@dataclass(frozen=True, eq=False)
class DenseSide(SideInfo):
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        m = np.ascontiguousarray(self.matrix, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
            raise ValueError(f"side information must be a non-empty matrix, got shape {m.shape}")
        object.__setattr__(self, "matrix", m)

    @property
    def rows(self):
        return self.matrix.shape[0]

    @property
    def cols(self):
        return self.matrix.shape[1]

    def project(self, u):
        if u.shape[0] != self.cols:
            raise ValueError(f"factor has {u.shape[0]} rows, side information has {self.cols} columns")
        return self.matrix @ u

    def project_t(self, g):
        if g.shape[0] != self.rows:
            raise ValueError(f"gradient has {g.shape[0]} rows, expected {self.rows}")
        return self.matrix.T @ g

    def truncate(self, rows):
        self._check_truncate(rows)
        return self if rows == self.rows else DenseSide(self.matrix[:rows])

    def to_dense(self):
        return self.matrix


@dataclass(frozen=True, eq=False)
class SparseSide(SideInfo):
    matrix: sp.csr_matrix = field(repr=False)

    def __post_init__(self) -> None:
        m = sp.csr_matrix(self.matrix, dtype=np.float64)
        if m.shape[0] < 1 or m.shape[1] < 1:
            raise ValueError(f"side information must be a non-empty matrix, got shape {m.shape}")
        object.__setattr__(self, "matrix", m)

    @property
    def rows(self):
        return self.matrix.shape[0]

    @property
    def cols(self):
        return self.matrix.shape[1]

    def project(self, u):
        if u.shape[0] != self.cols:
            raise ValueError(f"factor has {u.shape[0]} rows, side information has {self.cols} columns")
        return np.asarray(self.matrix @ u)

    def project_t(self, g):
        if g.shape[0] != self.rows:
            raise ValueError(f"gradient has {g.shape[0]} rows, expected {self.rows}")
        return np.asarray(self.matrix.T @ g)

    def truncate(self, rows):
        self._check_truncate(rows)
        return self if rows == self.rows else SparseSide(self.matrix[:rows])

    def row_block(self, start, stop):
        return self.matrix[start:stop].toarray()

    def to_dense(self):
        return self.matrix.toarray()


class SideInfoSet(tuple):
    """One :class:`SideInfo` per mode."""

    def __new__(cls, sides: Sequence[SideInfo]):
        sides = tuple(sides)
        for s in sides:
            if not isinstance(s, SideInfo):
                raise TypeError(f"expected SideInfo, got {type(s).__name__}")
        return super().__new__(cls, sides)

    @classmethod
    def identity(cls, dims: Sequence[int]) -> "SideInfoSet":
        return cls([IdentitySide(int(d)) for d in dims])

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(s.rows for s in self)

    @property
    def feature_dims(self) -> tuple[int, ...]:
        return tuple(s.cols for s in self)

    def truncate(self, dims: Sequence[int]) -> "SideInfoSet":
        if len(dims) != len(self):
            raise ValueError(f"expected {len(self)} dims, got {len(dims)}")
        return SideInfoSet([s.truncate(int(d)) for s, d in zip(self, dims)])


@dataclass
class Hyperparams:
    """Regularisation, step size and loop settings for one run."""

    lambda_g: float = 1e-3
    lambda_i: tuple[float, ...] = (1e-3,)
    gamma: float = 1e-3
    inner_steps: int = 1
    nonnegative: bool = False
    seed: int = 0
    stale_core_residual: bool = False

    def __post_init__(self) -> None:
        if isinstance(self.lambda_i, (int, float)):
            self.lambda_i = (float(self.lambda_i),)
        self.lambda_i = tuple(float(v) for v in self.lambda_i)
        if not self.gamma > 0:
            raise ValueError(f"gamma must be > 0, got {self.gamma}")
        if self.inner_steps < 1:
            raise ValueError(f"inner_steps (K) must be >= 1, got {self.inner_steps}")
        if self.lambda_g < 0 or any(v < 0 for v in self.lambda_i):
            raise ValueError("regularisation weights must be >= 0")

    def lambdas(self, ndim: int) -> tuple[float, ...]:
        """Per-mode factor weights; a single value is broadcast."""
        if len(self.lambda_i) == 1:
            return self.lambda_i * ndim
        if len(self.lambda_i) != ndim:
            raise ValueError(f"expected 1 or {ndim} lambda_i values, got {len(self.lambda_i)}")
        return self.lambda_i


@dataclass
class TuckerModel:
    core: np.ndarray
    factors: list[np.ndarray]

    @property
    def ranks(self) -> tuple[int, ...]:
        return tuple(self.core.shape)

    @property
    def ndim(self) -> int:
        return self.core.ndim

    def copy(self) -> "TuckerModel":
        return TuckerModel(self.core.copy(), [u.copy() for u in self.factors])

    def min_entry(self) -> float:
        return min(float(self.core.min()), *(float(u.min()) for u in self.factors))


def init_model(ranks: Sequence[int], side: SideInfoSet, hp: Hyperparams) -> TuckerModel:
    """Uniform ``[0, 1)`` initialisation from ``hp.seed``."""
    ranks = tuple(int(r) for r in ranks)
    if len(ranks) != len(side):
        raise ValueError(f"got {len(ranks)} ranks for {len(side)} modes")
    if any(r < 1 for r in ranks):
        raise ValueError(f"ranks must all be >= 1, got {ranks}")
    for n, (r, m) in enumerate(zip(ranks, side.feature_dims)):
        if r > m:
            warnings.warn(f"rank {r} exceeds side-information width {m} on mode {n}", stacklevel=2)
    rng = np.random.default_rng(hp.seed)
    factors = [rng.random((m, r)) for m, r in zip(side.feature_dims, ranks)]
    core = rng.random(ranks)
    return TuckerModel(core, factors)


def projected_factors(model: TuckerModel, side: SideInfoSet) -> list[np.ndarray]:
    """``[A_n @ U_n for each mode]``, each C-contiguous ``I_n x r_n``."""
    if len(side) != model.ndim:
        raise ValueError(f"model has {model.ndim} modes, side information has {len(side)}")
    return [np.ascontiguousarray(s.project(u)) for s, u in zip(side, model.factors)]


def _check_index(index, dims):
    if len(index) != len(dims) or any(not 0 <= i < d for i, d in zip(index, dims)):
        raise IndexError(f"index {tuple(index)} out of bounds for shape {tuple(dims)}")


def predict_entry(model: TuckerModel, side: SideInfoSet, index: Sequence[int],
                  projected: list[np.ndarray] | None = None) -> float:
    """Model value at a single index."""
    if projected is None:
        projected = projected_factors(model, side)
    _check_index(index, [p.shape[0] for p in projected])
    out = model.core
    # contract the last mode first so the remaining axes stay leading
    for p, i in zip(reversed(projected), reversed(tuple(index))):
        out = out @ p[i]
    return float(out)


def predict(model: TuckerModel, side: SideInfoSet, indices: np.ndarray,
            projected: list[np.ndarray] | None = None) -> np.ndarray:
    """Model values at every row of ``indices`` (vectorised)."""
    from .kernels import predict_observed

    if projected is None:
        projected = projected_factors(model, side)
    return predict_observed(np.asarray(indices, dtype=np.int64), projected, model.core)


def reconstruct_dense(model: TuckerModel, side: SideInfoSet) -> np.ndarray:
    """Full dense reconstruction; only sensible for small shapes."""
    return multi_mode_product(model.core, projected_factors(model, side))


def _check_data(side: SideInfoSet, data: SparseTensor) -> None:
    if tuple(data.shape) != side.dims:
        raise ValueError(f"data shape {data.shape} does not match side information rows {side.dims}")


def regularizer(model: TuckerModel, hp: Hyperparams) -> float:
    lams = hp.lambdas(model.ndim)
    return hp.lambda_g * float(np.sum(model.core ** 2)) + sum(
        lam * float(np.sum(u ** 2)) for lam, u in zip(lams, model.factors)
    )


def objective(model: TuckerModel, side: SideInfoSet, data: SparseTensor, hp: Hyperparams) -> float:
    """Squared error over observed entries plus Frobenius regularisers."""
    _check_data(side, data)
    loss = 0.0
    if data.nnz:
        resid = data.values - predict(model, side, data.indices)
        loss = float(resid @ resid)
    return loss + regularizer(model, hp)
