"""Dense reference computations used to check the sparse kernels.

Everything here materialises full tensors and explicit Kronecker products,
so it is only meant for small shapes.
"""

from __future__ import annotations

from functools import reduce

import numpy as np

from .model import Hyperparams, SideInfoSet, TuckerModel, objective
from .optimizer import GradientBuffers
from .tensor import SparseTensor, matricize, mode_n_product, multi_mode_product

__all__ = [
    "dense_projected",
    "dense_reconstruction",
    "dense_objective",
    "cyclic_kron",
    "kronecker_gradients",
    "finite_difference_gradients",
    "max_relative_error",
    "max_abs_error",
]


def dense_projected(model: TuckerModel, side: SideInfoSet) -> list[np.ndarray]:
    return [s.to_dense() @ u for s, u in zip(side, model.factors)]


def dense_reconstruction(model: TuckerModel, side: SideInfoSet) -> np.ndarray:
    return multi_mode_product(model.core, dense_projected(model, side))


def dense_objective(model: TuckerModel, side: SideInfoSet, data: SparseTensor,
                    hp: Hyperparams) -> float:
    resid = (data.to_dense() - dense_reconstruction(model, side)) * data.mask()
    lams = hp.lambdas(model.ndim)
    return (float(np.sum(resid ** 2)) + hp.lambda_g * float(np.sum(model.core ** 2))
            + sum(lam * float(np.sum(u ** 2)) for lam, u in zip(lams, model.factors)))


def cyclic_kron(mats: list[np.ndarray], mode: int) -> np.ndarray:
    """``M[n-1] (x) ... (x) M[0] (x) M[N-1] (x) ... (x) M[n+1]``."""
    ndim = len(mats)
    order = [(mode - k) % ndim for k in range(1, ndim)]
    return reduce(np.kron, [mats[k] for k in order])


def kronecker_gradients(model: TuckerModel, side: SideInfoSet, data: SparseTensor,
                        hp: Hyperparams) -> GradientBuffers:
    """Gradients from unfoldings and explicit Kronecker products.

    The data term carries the factor 2 that comes from differentiating the
    squared Frobenius norm.
    """
    proj = dense_projected(model, side)
    resid = (data.to_dense() - multi_mode_product(model.core, proj)) * data.mask()
    lams = hp.lambdas(model.ndim)
    d_factors = []
    for n, (s, u) in enumerate(zip(side, model.factors)):
        kr = cyclic_kron(proj, n)
        g = s.to_dense().T @ matricize(resid, n) @ kr @ matricize(model.core, n).T
        d_factors.append(-2.0 * g + 2.0 * lams[n] * u)
    d_core = resid
    for n, p in enumerate(proj):
        d_core = mode_n_product(d_core, p.T, n)
    d_core = -2.0 * d_core + 2.0 * hp.lambda_g * model.core
    return GradientBuffers(d_core=d_core, d_factors=d_factors)


def finite_difference_gradients(model: TuckerModel, side: SideInfoSet, data: SparseTensor,
                                hp: Hyperparams, rel_step: float = 1e-6) -> GradientBuffers:
    """Central differences of :func:`objective` with step ``rel_step * (1 + |theta|)``."""
    work = model.copy()
    arrays = [work.core] + work.factors

    def partials(a):
        out = np.empty_like(a)
        flat, gflat = a.reshape(-1), out.reshape(-1)
        for k in range(flat.size):
            theta = flat[k]
            h = rel_step * (1.0 + abs(theta))
            flat[k] = theta + h
            fp = objective(work, side, data, hp)
            flat[k] = theta - h
            fm = objective(work, side, data, hp)
            flat[k] = theta
            gflat[k] = (fp - fm) / (2.0 * h)
        return out

    grads = [partials(a) for a in arrays]
    return GradientBuffers(d_core=grads[0], d_factors=grads[1:])


def _flatten(g: GradientBuffers) -> np.ndarray:
    return np.concatenate([g.d_core.ravel()] + [d.ravel() for d in g.d_factors])


def max_relative_error(a: GradientBuffers, b: GradientBuffers, floor: float = 1e-6) -> float:
    """``max_k |a_k - b_k| / max(|a_k|, |b_k|, floor)``."""
    x, y = _flatten(a), _flatten(b)
    denom = np.maximum(np.maximum(np.abs(x), np.abs(y)), floor)
    return float(np.max(np.abs(x - y) / denom))


def max_abs_error(a: GradientBuffers, b: GradientBuffers) -> float:
    return float(np.max(np.abs(_flatten(a) - _flatten(b))))
