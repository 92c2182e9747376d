"""Inner-loop update kernels.

Every kernel walks ``idx`` (positions into the entry arrays) in order and
updates the factor rows in place. Two implementations exist with the same
signatures:

* ``numba``: ``@njit(nogil=True)`` loops, so worker threads run them in parallel.
* ``numpy``: a Python loop over instances using numpy row arithmetic.

The active backend is chosen once at import from ``HDSF_BACKEND``
(``numba`` or ``numpy``); it defaults to numba when importable. Each kernel
returns -1 on success, or the position within ``idx`` of the first instance
whose update produced a non-finite value (processing stops there).
"""

from __future__ import annotations

import math
import os
from types import SimpleNamespace

import numpy as np

KERNEL_NAMES = ("sgd_run", "nag_run", "sgd_rows_run", "sgd_cols_run")


# Loop form, compiled by numba. Kept free of numpy calls so the compiled code
# is a straight scalar loop over the latent dimension.

def _loop_sgd_run(m, n, rows, cols, vals, idx, eta, lam):
    d = m.shape[1]
    for p in range(idx.shape[0]):
        k = idx[p]
        u = rows[k]
        v = cols[k]
        dot = 0.0
        for f in range(d):
            dot += m[u, f] * n[v, f]
        e = vals[k] - dot
        ok = True
        for f in range(d):
            mf = m[u, f]
            nf = n[v, f]
            m[u, f] = mf + eta * (e * nf - lam * mf)
            n[v, f] = nf + eta * (e * mf - lam * nf)
            if not (math.isfinite(m[u, f]) and math.isfinite(n[v, f])):
                ok = False
        if not ok:
            return p
    return -1


def _loop_nag_run(m, n, phi, psi, rows, cols, vals, idx, eta, lam, gamma):
    d = m.shape[1]
    for p in range(idx.shape[0]):
        k = idx[p]
        u = rows[k]
        v = cols[k]
        dot = 0.0
        for f in range(d):
            dot += (m[u, f] + gamma * phi[u, f]) * (n[v, f] + gamma * psi[v, f])
        e = vals[k] - dot
        ok = True
        for f in range(d):
            mt = m[u, f] + gamma * phi[u, f]
            nt = n[v, f] + gamma * psi[v, f]
            ph = gamma * phi[u, f] - eta * (-e * nt + lam * mt)
            ps = gamma * psi[v, f] - eta * (-e * mt + lam * nt)
            phi[u, f] = ph
            psi[v, f] = ps
            m[u, f] = m[u, f] + ph
            n[v, f] = n[v, f] + ps
            if not (math.isfinite(m[u, f]) and math.isfinite(n[v, f])):
                ok = False
        if not ok:
            return p
    return -1


def _loop_sgd_rows_run(m, n, rows, cols, vals, idx, eta, lam):
    d = m.shape[1]
    for p in range(idx.shape[0]):
        k = idx[p]
        u = rows[k]
        v = cols[k]
        dot = 0.0
        for f in range(d):
            dot += m[u, f] * n[v, f]
        e = vals[k] - dot
        ok = True
        for f in range(d):
            mf = m[u, f]
            m[u, f] = mf + eta * (e * n[v, f] - lam * mf)
            if not math.isfinite(m[u, f]):
                ok = False
        if not ok:
            return p
    return -1


def _loop_sgd_cols_run(m, n, rows, cols, vals, idx, eta, lam):
    d = m.shape[1]
    for p in range(idx.shape[0]):
        k = idx[p]
        u = rows[k]
        v = cols[k]
        dot = 0.0
        for f in range(d):
            dot += m[u, f] * n[v, f]
        e = vals[k] - dot
        ok = True
        for f in range(d):
            nf = n[v, f]
            n[v, f] = nf + eta * (e * m[u, f] - lam * nf)
            if not math.isfinite(n[v, f]):
                ok = False
        if not ok:
            return p
    return -1


# numpy fallback

def _np_sgd_run(m, n, rows, cols, vals, idx, eta, lam):
    for p, k in enumerate(idx):
        u, v = rows[k], cols[k]
        mu = m[u].copy()
        nv = n[v].copy()
        e = vals[k] - mu @ nv
        m[u] = mu + eta * (e * nv - lam * mu)
        n[v] = nv + eta * (e * mu - lam * nv)
        if not (np.isfinite(m[u]).all() and np.isfinite(n[v]).all()):
            return p
    return -1


def _np_nag_run(m, n, phi, psi, rows, cols, vals, idx, eta, lam, gamma):
    for p, k in enumerate(idx):
        u, v = rows[k], cols[k]
        mt = m[u] + gamma * phi[u]
        nt = n[v] + gamma * psi[v]
        e = vals[k] - mt @ nt
        phi[u] = gamma * phi[u] - eta * (-e * nt + lam * mt)
        psi[v] = gamma * psi[v] - eta * (-e * mt + lam * nt)
        m[u] += phi[u]
        n[v] += psi[v]
        if not (np.isfinite(m[u]).all() and np.isfinite(n[v]).all()):
            return p
    return -1


def _np_sgd_rows_run(m, n, rows, cols, vals, idx, eta, lam):
    for p, k in enumerate(idx):
        u, v = rows[k], cols[k]
        mu = m[u]
        e = vals[k] - mu @ n[v]
        m[u] = mu + eta * (e * n[v] - lam * mu)
        if not np.isfinite(m[u]).all():
            return p
    return -1


def _np_sgd_cols_run(m, n, rows, cols, vals, idx, eta, lam):
    for p, k in enumerate(idx):
        u, v = rows[k], cols[k]
        nv = n[v]
        e = vals[k] - m[u] @ nv
        n[v] = nv + eta * (e * m[u] - lam * nv)
        if not np.isfinite(n[v]).all():
            return p
    return -1


numpy_kernels = SimpleNamespace(
    name="numpy",
    sgd_run=_np_sgd_run,
    nag_run=_np_nag_run,
    sgd_rows_run=_np_sgd_rows_run,
    sgd_cols_run=_np_sgd_cols_run,
)

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    numba_kernels = None
else:
    _jit = numba.njit(nogil=True, cache=True)
    numba_kernels = SimpleNamespace(
        name="numba",
        sgd_run=_jit(_loop_sgd_run),
        nag_run=_jit(_loop_nag_run),
        sgd_rows_run=_jit(_loop_sgd_rows_run),
        sgd_cols_run=_jit(_loop_sgd_cols_run),
    )


def select_backend(name: str | None = None) -> SimpleNamespace:
    name = (name or os.environ.get("HDSF_BACKEND") or "numba").strip().lower()
    if name not in ("numba", "numpy"):
        raise ValueError(f"HDSF_BACKEND must be 'numba' or 'numpy', got {name!r}")
    if name == "numba" and numba_kernels is None:
        return numpy_kernels
    return numba_kernels if name == "numba" else numpy_kernels


kernels = select_backend()
BACKEND = kernels.name


def warm_up(ns: SimpleNamespace | None = None) -> None:
    """Trigger compilation so the first timed epoch does not pay for it."""
    ns = ns or kernels
    m = np.zeros((1, 1))
    n = np.zeros((1, 1))
    rows = np.zeros(1, np.int64)
    vals = np.zeros(1)
    idx = np.zeros(1, np.int64)
    ns.sgd_run(m, n, rows, rows, vals, idx, 0.1, 0.0)
    ns.nag_run(m, n, m.copy(), n.copy(), rows, rows, vals, idx, 0.1, 0.0, 0.5)
    ns.sgd_rows_run(m, n, rows, rows, vals, idx, 0.1, 0.0)
    ns.sgd_cols_run(m, n, rows, rows, vals, idx, 0.1, 0.0)
