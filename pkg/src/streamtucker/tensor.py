"""Sparse and dense tensor primitives.

Dense tensors and matrices are plain ``float64`` numpy arrays in C order.
Sparse tensors are stored in coordinate (COO) format with indices kept in
lexicographic order, which is the canonical entry order used everywhere
else in the package.

Unfoldings follow the cyclic convention: for ``matricize(t, n)`` the column
index runs over the remaining modes ``n+1, ..., N-1, 0, ..., n-1`` with mode
``n+1`` varying fastest. This pairs with the Kronecker product
``P[n-1] (x) ... (x) P[0] (x) P[N-1] (x) ... (x) P[n+1]`` so that::

    matricize(G x_0 P0 ... x_{N-1} P_{N-1}, n) == P_n @ matricize(G, n) @ kron(...).T
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

__all__ = [
    "SparseTensor",
    "check_shape",
    "cyclic_order",
    "matricize",
    "refold",
    "mode_n_product",
    "multi_mode_product",
    "sparse_iter",
]


def check_shape(dims: Sequence[int], min_order: int = 2) -> tuple[int, ...]:
    """Validate and normalise a tensor shape."""
    dims = tuple(int(d) for d in dims)
    if len(dims) < min_order:
        raise ValueError(f"tensor order must be >= {min_order}, got shape {dims}")
    if any(d < 1 for d in dims):
        raise ValueError(f"all dimensions must be >= 1, got shape {dims}")
    return dims


def cyclic_order(ndim: int, mode: int) -> list[int]:
    """Axis permutation used by :func:`matricize` (row mode first)."""
    # slowest -> fastest: n-1, ..., 0, N-1, ..., n+1
    rest = [(mode - k) % ndim for k in range(1, ndim)]
    return [mode] + rest


def _check_mode(ndim: int, mode: int) -> int:
    if not 0 <= mode < ndim:
        raise ValueError(f"mode {mode} out of range for order-{ndim} tensor")
    return mode


def matricize(t: np.ndarray, mode: int) -> np.ndarray:
    """Mode-``mode`` unfolding with cyclic column ordering.

    Returns a C-contiguous ``(t.shape[mode], prod(other dims))`` matrix.
    """
    t = np.asarray(t, dtype=np.float64)
    _check_mode(t.ndim, mode)
    perm = cyclic_order(t.ndim, mode)
    return np.ascontiguousarray(t.transpose(perm)).reshape(t.shape[mode], -1)


def refold(m: np.ndarray, mode: int, shape: Sequence[int]) -> np.ndarray:
    """Inverse of :func:`matricize`."""
    shape = tuple(shape)
    _check_mode(len(shape), mode)
    perm = cyclic_order(len(shape), mode)
    permuted_shape = tuple(shape[p] for p in perm)
    m = np.asarray(m, dtype=np.float64)
    if m.size != int(np.prod(shape)) or m.shape[0] != shape[mode]:
        raise ValueError(f"matrix of shape {m.shape} cannot be refolded to {shape} along mode {mode}")
    return np.ascontiguousarray(m.reshape(permuted_shape).transpose(np.argsort(perm)))


def mode_n_product(t: np.ndarray, m: np.ndarray, mode: int) -> np.ndarray:
    """Multiply tensor ``t`` by matrix ``m`` along ``mode``.

    The result has ``m.shape[0]`` in place of ``t.shape[mode]``.
    """
    t = np.asarray(t, dtype=np.float64)
    m = np.asarray(m, dtype=np.float64)
    _check_mode(t.ndim, mode)
    if m.ndim != 2 or m.shape[1] != t.shape[mode]:
        raise ValueError(
            f"matrix of shape {m.shape} incompatible with mode {mode} of tensor {t.shape}"
        )
    new_shape = list(t.shape)
    new_shape[mode] = m.shape[0]
    return refold(m @ matricize(t, mode), mode, new_shape)


def multi_mode_product(t: np.ndarray, matrices: Sequence[np.ndarray]) -> np.ndarray:
    """``t x_0 matrices[0] x_1 matrices[1] ...`` over every mode."""
    out = np.asarray(t, dtype=np.float64)
    for mode, m in enumerate(matrices):
        out = mode_n_product(out, m, mode)
    return out


@dataclass(frozen=True)
class SparseTensor:
    """Observed entries of a tensor in canonical COO form.

    Parameters
    ----------
    shape:
        Tensor dimensions.
    indices:
        ``(nnz, N)`` integer array of index tuples.
    values:
        ``(nnz,)`` float array.
    """

    shape: tuple[int, ...]
    indices: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        shape = check_shape(self.shape)
        idx = np.asarray(self.indices, dtype=np.int64)
        vals = np.asarray(self.values, dtype=np.float64)
        if idx.size == 0:
            idx = idx.reshape(0, len(shape))
        if idx.ndim != 2 or idx.shape[1] != len(shape):
            raise ValueError(f"indices must have shape (nnz, {len(shape)}), got {idx.shape}")
        if vals.shape != (idx.shape[0],):
            raise ValueError(f"expected {idx.shape[0]} values, got shape {vals.shape}")
        if idx.shape[0]:
            if idx.min() < 0 or np.any(idx >= np.asarray(shape)):
                bad = int(np.flatnonzero(np.any((idx < 0) | (idx >= np.asarray(shape)), axis=1))[0])
                raise IndexError(f"index {tuple(idx[bad])} out of bounds for shape {shape}")
            order = np.lexsort(idx.T[::-1])
            idx = idx[order]
            vals = vals[order]
            dup = np.all(idx[1:] == idx[:-1], axis=1)
            if dup.any():
                first = int(np.flatnonzero(dup)[0])
                raise ValueError(f"duplicate index {tuple(idx[first])}")
        idx = np.ascontiguousarray(idx)
        vals = np.ascontiguousarray(vals)
        idx.setflags(write=False)
        vals.setflags(write=False)
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_entries(cls, shape: Sequence[int], entries) -> "SparseTensor":
        """Build from an iterable of ``(index_tuple, value)`` pairs."""
        entries = list(entries)
        idx = np.array([e[0] for e in entries], dtype=np.int64).reshape(len(entries), len(shape))
        vals = np.array([e[1] for e in entries], dtype=np.float64)
        return cls(tuple(shape), idx, vals)

    @classmethod
    def from_dense(cls, dense: np.ndarray, mask: np.ndarray | None = None) -> "SparseTensor":
        dense = np.asarray(dense, dtype=np.float64)
        if mask is None:
            mask = np.ones(dense.shape, dtype=bool)
        idx = np.argwhere(mask)
        return cls(dense.shape, idx, dense[tuple(idx.T)])

    @property
    def ndim(self) -> int:
        return len(self.shape)

    @property
    def nnz(self) -> int:
        return int(self.values.shape[0])

    def __len__(self) -> int:
        return self.nnz

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.shape)
        out[tuple(self.indices.T)] = self.values
        return out

    def mask(self) -> np.ndarray:
        out = np.zeros(self.shape, dtype=bool)
        out[tuple(self.indices.T)] = True
        return out

    def select(self, keep: np.ndarray, shape: Sequence[int] | None = None) -> "SparseTensor":
        """Subset of entries by boolean mask or index array, optionally reshaped."""
        keep = np.asarray(keep)
        shape = check_shape(shape) if shape is not None else self.shape
        if keep.dtype != bool and keep.size > 1 and np.any(np.diff(keep) <= 0):
            return SparseTensor(shape, self.indices[keep], self.values[keep])
        # an ordered subset of canonical entries stays canonical; only bounds can fail
        idx = self.indices[keep]
        if len(shape) != self.ndim:
            raise ValueError(f"cannot reshape order-{self.ndim} tensor to {shape}")
        if idx.shape[0] and np.any(idx.max(axis=0) >= np.asarray(shape)):
            return SparseTensor(shape, idx, self.values[keep])
        out = object.__new__(SparseTensor)
        vals = self.values[keep]
        idx.setflags(write=False)
        vals.setflags(write=False)
        object.__setattr__(out, "shape", shape)
        object.__setattr__(out, "indices", idx)
        object.__setattr__(out, "values", vals)
        return out

    def within(self, dims: Sequence[int]) -> np.ndarray:
        """Boolean mask of entries whose index fits inside ``dims``."""
        return np.all(self.indices < np.asarray(dims, dtype=np.int64), axis=1)


def sparse_iter(t: SparseTensor) -> Iterator[tuple[tuple[int, ...], float]]:
    """Yield ``(index_tuple, value)`` pairs in canonical order."""
    for row, v in zip(t.indices, t.values):
        yield tuple(int(i) for i in row), float(v)
