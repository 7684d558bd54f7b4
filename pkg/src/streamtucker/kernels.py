"""Backend selection for the observed-entry sweep.

The compiled Cython extension is used when it imports; otherwise the numpy
implementation is used. ``STREAMTUCKER_BACKEND=python`` forces the fallback
and ``STREAMTUCKER_BACKEND=compiled`` makes a missing extension an error.
"""

from __future__ import annotations

import logging
import os

import numpy as np

from . import _pykernels

logger = logging.getLogger(__name__)

CHUNK = 2048

_requested = os.environ.get("STREAMTUCKER_BACKEND", "auto").lower()
_compiled = None
if _requested != "python":
    try:
        from . import _ckernels as _compiled
    except ImportError as exc:
        if _requested == "compiled":
            raise
        logger.debug("compiled kernels unavailable (%s); using numpy fallback", exc)

BACKENDS = {"python": _pykernels}
if _compiled is not None:
    BACKENDS["compiled"] = _compiled
BACKEND = "compiled" if _compiled is not None else "python"


def _impl(backend):
    name = backend or BACKEND
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"kernel backend {name!r} not available; have {sorted(BACKENDS)}") from None


def _prep(idx, projected, core):
    idx = np.ascontiguousarray(idx, dtype=np.int64)
    if idx.ndim != 2 or idx.shape[1] != len(projected):
        raise ValueError(f"indices of shape {idx.shape} do not match {len(projected)} modes")
    projected = [np.ascontiguousarray(p, dtype=np.float64) for p in projected]
    if idx.shape[0]:
        rows = np.array([p.shape[0] for p in projected])
        if idx.min() < 0 or np.any(idx.max(axis=0) >= rows):
            raise IndexError(f"observed indices exceed projected factor rows {tuple(rows)}")
    core = np.ascontiguousarray(core, dtype=np.float64).ravel()
    return idx, projected, core


def predict_observed(idx, projected, core, *, nthreads=1, backend=None) -> np.ndarray:
    idx, projected, core = _prep(idx, projected, core)
    out, _, _ = _impl(backend).sweep(
        idx, np.empty(0), False, projected, core, False, False, CHUNK, nthreads
    )
    return out


def sweep(idx, vals, projected, core, *, want_h=True, want_core=False, nthreads=1,
          deterministic=True, backend=None):
    """One pass over observed entries.

    Returns
    -------
    resid : (nnz,) array
        ``vals - prediction`` at each entry.
    h : (nnz, sum(ranks)) array or None
        Per-entry derivative of the prediction with respect to the entry's
        row of each projected factor, modes concatenated.
    core_sum : (prod(ranks),) array or None
        ``sum_e resid_e * kron(rows_e)``, the data part of the core gradient
        up to the factor ``-2``.

    With ``deterministic=False`` the entries are split into one chunk per
    thread, which lowers merge overhead but makes the rounding of
    ``core_sum`` depend on ``nthreads``.
    """
    idx, projected, core = _prep(idx, projected, core)
    vals = np.ascontiguousarray(vals, dtype=np.float64)
    if vals.shape != (idx.shape[0],):
        raise ValueError(f"expected {idx.shape[0]} values, got {vals.shape}")
    chunk = CHUNK
    if not deterministic and nthreads > 1:
        chunk = max(1, -(-idx.shape[0] // nthreads))
    resid, h, parts = _impl(backend).sweep(
        idx, vals, True, projected, core, want_h, want_core, chunk, nthreads
    )
    core_sum = None
    if want_core:
        # fixed chunk count, so this reduction order is independent of threads
        core_sum = np.zeros(core.size)
        for row in parts:
            core_sum += row
    return resid, h, core_sum
