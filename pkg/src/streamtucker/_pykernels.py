"""Pure numpy implementation of the observed-entry sweep.

Same contract as the compiled ``_ckernels.sweep``; entries are processed in
chunks of ``chunk`` rows to bound the memory of the row-wise Kronecker
products.
"""

from __future__ import annotations

import numpy as np


def _rowwise_kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return (a[:, :, None] * b[:, None, :]).reshape(a.shape[0], -1)


def sweep(idx, vals, has_x, projected, core, want_h, want_core, chunk, nthreads=1):
    idx = np.asarray(idx, dtype=np.int64)
    nnz, ndim = idx.shape
    ranks = [p.shape[1] for p in projected]
    core_flat = np.asarray(core, dtype=np.float64).ravel()
    if core_flat.size != int(np.prod(ranks)):
        raise ValueError("core size does not match factor ranks")
    nchunks = -(-nnz // chunk) if nnz else 0
    r = np.empty(nnz)
    h = np.empty((nnz, sum(ranks))) if want_h else None
    gparts = np.zeros((nchunks, core_flat.size)) if want_core else None
    hoff = np.concatenate([[0], np.cumsum(ranks)])

    for ci in range(nchunks):
        sl = slice(ci * chunk, min((ci + 1) * chunk, nnz))
        rows = [p[idx[sl, n]] for n, p in enumerate(projected)]
        m = rows[0].shape[0]
        pre = [np.ones((m, 1))]
        for b in rows:
            pre.append(_rowwise_kron(pre[-1], b))
        full = pre[-1]
        pred = full @ core_flat
        r[sl] = vals[sl] - pred if has_x else pred
        if want_h:
            suf = [None] * ndim
            suf[-1] = np.ones((m, 1))
            for n in range(ndim - 2, -1, -1):
                suf[n] = _rowwise_kron(rows[n + 1], suf[n + 1])
            for n in range(ndim):
                g3 = core_flat.reshape(pre[n].shape[1], ranks[n], suf[n].shape[1])
                h[sl, hoff[n]:hoff[n + 1]] = np.einsum("ea,ajc,ec->ej", pre[n], g3, suf[n])
        if want_core:
            gparts[ci] = r[sl] @ full
    return r, h, gparts
