# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled entry sweep over observed tensor entries.

Entries are split into fixed-size chunks. Each chunk is processed by one
thread in entry order and owns one row of the core partial-sum buffer, so
results do not depend on the number of threads.
"""

import numpy as np
cimport numpy as cnp
from cython.parallel cimport prange, parallel
from libc.stdlib cimport malloc, free

cnp.import_array()

ctypedef cnp.int64_t idx_t


cdef void _entry(const idx_t* ix, Py_ssize_t ndim,
                 const double* pflat, const idx_t* poff, const idx_t* ranks,
                 const double* core,
                 const idx_t* preoff, const idx_t* sufoff, const idx_t* prelen,
                 const idx_t* suflen, const idx_t* hoff,
                 double* pre, double* suf,
                 double x, bint has_x, double* out_r,
                 bint want_h, double* hrow,
                 bint want_core, double* gacc) noexcept nogil:
    cdef Py_ssize_t n, a, j, c, rn, la, lc, base
    cdef const double* b
    cdef double* src
    cdef double* dst
    cdef double acc, inner, pred, r

    # prefix Kronecker rows: pre_n = b_0 (x) ... (x) b_{n-1}
    pre[preoff[0]] = 1.0
    for n in range(ndim):
        b = pflat + poff[n] + ix[n] * ranks[n]
        src = pre + preoff[n]
        dst = pre + preoff[n + 1]
        rn = ranks[n]
        la = prelen[n]
        for a in range(la):
            for j in range(rn):
                dst[a * rn + j] = src[a] * b[j]
    # suffix Kronecker rows: suf_n = b_{n+1} (x) ... (x) b_{N-1}
    suf[sufoff[ndim - 1]] = 1.0
    for n in range(ndim - 2, -1, -1):
        b = pflat + poff[n + 1] + ix[n + 1] * ranks[n + 1]
        src = suf + sufoff[n + 1]
        dst = suf + sufoff[n]
        rn = ranks[n + 1]
        lc = suflen[n + 1]
        for j in range(rn):
            for c in range(lc):
                dst[j * lc + c] = b[j] * src[c]

    src = pre + preoff[ndim]
    la = prelen[ndim]
    pred = 0.0
    for a in range(la):
        pred = pred + core[a] * src[a]
    if has_x:
        r = x - pred
    else:
        r = pred
    out_r[0] = r

    if want_h:
        for n in range(ndim):
            rn = ranks[n]
            la = prelen[n]
            lc = suflen[n]
            for j in range(rn):
                acc = 0.0
                for a in range(la):
                    base = (a * rn + j) * lc
                    inner = 0.0
                    for c in range(lc):
                        inner = inner + core[base + c] * suf[sufoff[n] + c]
                    acc = acc + pre[preoff[n] + a] * inner
                hrow[hoff[n] + j] = acc
    if want_core:
        src = pre + preoff[ndim]
        la = prelen[ndim]
        for a in range(la):
            gacc[a] = gacc[a] + r * src[a]


def sweep(const idx_t[:, ::1] idx, const double[::1] vals, bint has_x,
          list projected, const double[::1] core,
          bint want_h, bint want_core, Py_ssize_t chunk, int nthreads):
    """Residuals (or predictions), per-entry partial derivatives and core sums.

    Returns ``(r, h, core_partials)`` where ``h`` is ``(nnz, sum(ranks))`` or
    ``None`` and ``core_partials`` is ``(nchunks, prod(ranks))`` or ``None``.
    """
    cdef Py_ssize_t nnz = idx.shape[0]
    cdef Py_ssize_t ndim = idx.shape[1]
    cdef Py_ssize_t n, e, ci, e0, e1
    cdef Py_ssize_t nchunks = (nnz + chunk - 1) // chunk if nnz > 0 else 0

    ranks_np = np.array([p.shape[1] for p in projected], dtype=np.int64)
    rows_np = np.array([p.shape[0] for p in projected], dtype=np.int64)
    pflat_np = np.concatenate([np.ascontiguousarray(p, dtype=np.float64).ravel() for p in projected])
    poff_np = np.zeros(ndim, dtype=np.int64)
    poff_np[1:] = np.cumsum(rows_np * ranks_np)[:-1]
    prelen_np = np.ones(ndim + 1, dtype=np.int64)
    prelen_np[1:] = np.cumprod(ranks_np)
    suflen_np = np.ones(ndim, dtype=np.int64)
    for n in range(ndim - 2, -1, -1):
        suflen_np[n] = suflen_np[n + 1] * ranks_np[n + 1]
    preoff_np = np.zeros(ndim + 1, dtype=np.int64)
    preoff_np[1:] = np.cumsum(prelen_np)[:-1]
    sufoff_np = np.zeros(ndim, dtype=np.int64)
    sufoff_np[1:] = np.cumsum(suflen_np)[:-1]
    hoff_np = np.zeros(ndim, dtype=np.int64)
    hoff_np[1:] = np.cumsum(ranks_np)[:-1]
    cdef Py_ssize_t pre_size = int(prelen_np.sum())
    cdef Py_ssize_t suf_size = int(suflen_np.sum())
    cdef Py_ssize_t rtot = int(prelen_np[ndim])
    cdef Py_ssize_t hcols = int(ranks_np.sum())

    if core.shape[0] != rtot:
        raise ValueError("core size does not match factor ranks")

    cdef const idx_t[::1] ranks = ranks_np
    cdef const idx_t[::1] poff = poff_np
    cdef const idx_t[::1] prelen = prelen_np
    cdef const idx_t[::1] suflen = suflen_np
    cdef const idx_t[::1] preoff = preoff_np
    cdef const idx_t[::1] sufoff = sufoff_np
    cdef const idx_t[::1] hoff = hoff_np
    cdef const double[::1] pflat = pflat_np

    r_np = np.empty(nnz, dtype=np.float64)
    h_np = np.empty((nnz if want_h else 0, hcols), dtype=np.float64)
    g_np = np.zeros((nchunks if want_core else 0, rtot), dtype=np.float64)
    cdef double[::1] rout = r_np
    cdef double[:, ::1] hout = h_np
    cdef double[:, ::1] gout = g_np
    cdef double* pre
    cdef double* suf
    cdef double x
    cdef double* hrow
    cdef double* gacc

    if nnz == 0:
        return r_np, (h_np if want_h else None), (g_np if want_core else None)
    if nthreads < 1:
        nthreads = 1

    with nogil, parallel(num_threads=nthreads):
        pre = <double*> malloc(pre_size * sizeof(double))
        suf = <double*> malloc(suf_size * sizeof(double))
        for ci in prange(nchunks, schedule="static"):
            e0 = ci * chunk
            e1 = e0 + chunk
            if e1 > nnz:
                e1 = nnz
            for e in range(e0, e1):
                if has_x:
                    x = vals[e]
                else:
                    x = 0.0
                if want_h:
                    hrow = &hout[e, 0]
                else:
                    hrow = NULL
                if want_core:
                    gacc = &gout[ci, 0]
                else:
                    gacc = NULL
                _entry(&idx[e, 0], ndim, &pflat[0], &poff[0], &ranks[0], &core[0],
                       &preoff[0], &sufoff[0], &prelen[0], &suflen[0], &hoff[0],
                       pre, suf, x, has_x, &rout[e], want_h, hrow, want_core, gacc)
        free(pre)
        free(suf)

    return r_np, (h_np if want_h else None), (g_np if want_core else None)
