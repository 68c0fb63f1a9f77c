"""Pure-numpy concentration-step kernels (fallback backend).

Semantics are shared with the compiled backend: a pass computes the subset's
weighted moments (divisor = subset size), assembles the symbolic covariance,
Cholesky-factors it, and selects the requested number of observations with
the smallest squared distances, breaking ties by lowest index via a stable
argsort.  Iteration repeats passes until the log-determinant improvement
drops below ``tol`` (a fixed point gives improvement exactly zero) or
``max_steps`` updates have been applied.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import cho_solve

from ..errors import SingularCovarianceError


def _subset_moments(C, R, psi, exx, idx):
    q = idx.shape[0]
    Cs = C[idx]
    Rs = R[idx]
    cbar = Cs.mean(axis=0)
    rbar = Rs.mean(axis=0)
    dc = Cs - cbar
    dr = Rs - rbar
    s_cc = dc.T @ dc / q
    s_cr = dc.T @ dr / q
    s_rr = dr.T @ dr / q
    a = s_cr * psi[None, :]
    sb = s_cc + 0.25 * exx * s_rr + 0.5 * (a + a.T)
    return cbar, rbar, (sb + sb.T) / 2.0


def _factor(sb):
    try:
        low = np.linalg.cholesky(sb)
    except np.linalg.LinAlgError:
        raise SingularCovarianceError("subset covariance is not positive definite")
    diag = np.diag(low)
    if not np.all(np.isfinite(diag)) or np.any(diag <= 0.0):
        raise SingularCovarianceError("subset covariance is numerically degenerate")
    logdet = 2.0 * float(np.log(diag).sum())
    if not np.isfinite(logdet):
        raise SingularCovarianceError("subset covariance has non-finite log-determinant")
    sinv = cho_solve((low, True), np.eye(sb.shape[0]))
    return logdet, sinv


def _distances(C, R, psi, exx, cbar, rbar, sinv):
    dc = C - cbar
    dr = R - rbar
    a = dc + 0.5 * dr * psi
    t1 = np.einsum("ij,jk,ik->i", a, sinv, a)
    w = (exx - np.outer(psi, psi)) * sinv
    t2 = 0.25 * np.einsum("ij,jk,ik->i", dr, w, dr)
    return np.maximum(t1 + t2, 0.0)


def cstep_pass(C, R, psi, exx, idx, m_out):
    """One concentration pass: subset stats -> distances -> m_out nearest.

    Returns ``(logdet_of_subset, new_index_array)`` with the new indices
    sorted ascending.
    """
    cbar, rbar, sb = _subset_moments(C, R, psi, exx, idx)
    logdet, sinv = _factor(sb)
    d = _distances(C, R, psi, exx, cbar, rbar, sinv)
    order = np.argsort(d, kind="stable")
    new_idx = np.sort(order[:m_out]).astype(np.int64)
    return logdet, new_idx


def cstep_iterate(C, R, psi, exx, idx, m, max_steps, tol):
    """Iterate concentration passes from ``idx`` with subset size ``m``.

    Returns ``(final_idx, trace)`` where ``trace[k]`` is the log-determinant
    of the k-th visited subset (including the final one).  Passing a negative
    ``tol`` disables the improvement stop, producing exactly ``max_steps``
    updates (warm-start mode).
    """
    cur = np.asarray(idx, dtype=np.int64)
    trace = []
    prev = None
    while True:
        logdet, new_idx = cstep_pass(C, R, psi, exx, cur, m)
        trace.append(logdet)
        if prev is not None and prev - logdet < tol:
            break
        if len(trace) > max_steps:
            break
        if new_idx.shape[0] == cur.shape[0] and np.array_equal(new_idx, cur):
            break
        prev = logdet
        cur = new_idx
    return cur, np.asarray(trace)
