# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled concentration-step kernels.

Same contract as ``_cstep_py``: one pass computes subset moments, the
symbolic covariance, its Cholesky log-determinant, squared distances for
every row, and the stable nearest-m selection; iteration repeats passes
until the improvement drops below ``tol`` or ``max_steps`` updates ran.
The heavy loops run without the GIL so restarts can execute on threads.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport isfinite, log, sqrt

from ..errors import SingularCovarianceError

cnp.import_array()


cdef int _cholesky(const double[:, ::1] a, double[:, ::1] low, Py_ssize_t p) noexcept nogil:
    cdef Py_ssize_t i, j, k
    cdef double s
    for i in range(p):
        for j in range(p):
            low[i, j] = 0.0
    for j in range(p):
        s = a[j, j]
        for k in range(j):
            s -= low[j, k] * low[j, k]
        if not (s > 0.0) or not isfinite(s):
            return 1
        low[j, j] = sqrt(s)
        for i in range(j + 1, p):
            s = a[i, j]
            for k in range(j):
                s -= low[i, k] * low[j, k]
            low[i, j] = s / low[j, j]
    return 0


cdef void _lower_inverse(const double[:, ::1] low, double[:, ::1] linv,
                         Py_ssize_t p) noexcept nogil:
    cdef Py_ssize_t i, j, k
    cdef double s
    for i in range(p):
        for j in range(p):
            linv[i, j] = 0.0
    for i in range(p):
        linv[i, i] = 1.0 / low[i, i]
        for j in range(i):
            s = 0.0
            for k in range(j, i):
                s += low[i, k] * linv[k, j]
            linv[i, j] = -s / low[i, i]


cdef int _pass_core(const double[:, ::1] C, const double[:, ::1] R,
                    const double[::1] psi, const double[:, ::1] exx,
                    const cnp.int64_t[::1] idx,
                    double[::1] cbar, double[::1] rbar,
                    double[:, ::1] scc, double[:, ::1] scr, double[:, ::1] srr,
                    double[:, ::1] sb, double[:, ::1] low, double[:, ::1] linv,
                    double[:, ::1] sinv, double[:, ::1] wmat,
                    double[::1] buf_a, double[::1] buf_r,
                    double[::1] dist, double[::1] logdet_out) noexcept nogil:
    cdef Py_ssize_t n = C.shape[0], p = C.shape[1], q = idx.shape[0]
    cdef Py_ssize_t i, j, l, row
    cdef double s, t1, t2, acc1, acc2, d

    for j in range(p):
        cbar[j] = 0.0
        rbar[j] = 0.0
    for i in range(q):
        row = idx[i]
        for j in range(p):
            cbar[j] += C[row, j]
            rbar[j] += R[row, j]
    for j in range(p):
        cbar[j] /= q
        rbar[j] /= q

    for j in range(p):
        for l in range(p):
            scc[j, l] = 0.0
            scr[j, l] = 0.0
            srr[j, l] = 0.0
    for i in range(q):
        row = idx[i]
        for j in range(p):
            buf_a[j] = C[row, j] - cbar[j]
            buf_r[j] = R[row, j] - rbar[j]
        for j in range(p):
            for l in range(p):
                scc[j, l] += buf_a[j] * buf_a[l]
                scr[j, l] += buf_a[j] * buf_r[l]
                srr[j, l] += buf_r[j] * buf_r[l]

    for j in range(p):
        for l in range(p):
            sb[j, l] = (scc[j, l] / q
                        + 0.25 * exx[j, l] * (srr[j, l] / q)
                        + 0.5 * (scr[j, l] * psi[l] + scr[l, j] * psi[j]) / q)

    if _cholesky(sb, low, p):
        return 1
    s = 0.0
    for j in range(p):
        s += log(low[j, j])
    s *= 2.0
    if not isfinite(s):
        return 1
    logdet_out[0] = s

    _lower_inverse(low, linv, p)
    for i in range(p):
        for j in range(i + 1):
            s = 0.0
            for l in range(i, p):
                s += linv[l, i] * linv[l, j]
            sinv[i, j] = s
            sinv[j, i] = s
    for j in range(p):
        for l in range(p):
            wmat[j, l] = (exx[j, l] - psi[j] * psi[l]) * sinv[j, l]

    for i in range(n):
        for j in range(p):
            buf_r[j] = R[i, j] - rbar[j]
            buf_a[j] = C[i, j] - cbar[j] + 0.5 * psi[j] * buf_r[j]
        t1 = 0.0
        t2 = 0.0
        for j in range(p):
            acc1 = 0.0
            acc2 = 0.0
            for l in range(p):
                acc1 += sinv[j, l] * buf_a[l]
                acc2 += wmat[j, l] * buf_r[l]
            t1 += buf_a[j] * acc1
            t2 += buf_r[j] * acc2
        d = t1 + 0.25 * t2
        dist[i] = d if d > 0.0 else 0.0
    return 0


cdef class _Workspace:
    cdef object cbar, rbar, scc, scr, srr, sb, low, linv, sinv, wmat, buf_a, buf_r, dist, logdet

    def __init__(self, Py_ssize_t n, Py_ssize_t p):
        self.cbar = np.empty(p)
        self.rbar = np.empty(p)
        self.scc = np.empty((p, p))
        self.scr = np.empty((p, p))
        self.srr = np.empty((p, p))
        self.sb = np.empty((p, p))
        self.low = np.empty((p, p))
        self.linv = np.empty((p, p))
        self.sinv = np.empty((p, p))
        self.wmat = np.empty((p, p))
        self.buf_a = np.empty(p)
        self.buf_r = np.empty(p)
        self.dist = np.empty(n)
        self.logdet = np.empty(1)


cdef int _run_pass(const double[:, ::1] C, const double[:, ::1] R,
                   const double[::1] psi, const double[:, ::1] exx,
                   const cnp.int64_t[::1] idx, _Workspace ws, double* logdet):
    cdef double[::1] cbar = ws.cbar, rbar = ws.rbar
    cdef double[:, ::1] scc = ws.scc, scr = ws.scr, srr = ws.srr
    cdef double[:, ::1] sb = ws.sb, low = ws.low, linv = ws.linv
    cdef double[:, ::1] sinv = ws.sinv, wmat = ws.wmat
    cdef double[::1] buf_a = ws.buf_a, buf_r = ws.buf_r
    cdef double[::1] dist = ws.dist, ld = ws.logdet
    cdef int bad
    with nogil:
        bad = _pass_core(C, R, psi, exx, idx, cbar, rbar, scc, scr, srr,
                         sb, low, linv, sinv, wmat, buf_a, buf_r, dist, ld)
    if bad:
        return 1
    logdet[0] = ld[0]
    return 0


def cstep_pass(C, R, psi, exx, idx, m_out):
    """One concentration pass; see ``_cstep_py.cstep_pass``."""
    cdef double logdet = 0.0
    idx = np.ascontiguousarray(idx, dtype=np.int64)
    ws = _Workspace(C.shape[0], C.shape[1])
    if _run_pass(C, R, psi, exx, idx, ws, &logdet):
        raise SingularCovarianceError("subset covariance is not positive definite")
    order = np.argsort(ws.dist, kind="stable")
    new_idx = np.sort(order[:m_out]).astype(np.int64)
    return logdet, new_idx


def cstep_iterate(C, R, psi, exx, idx, m, max_steps, tol):
    """Iterated concentration passes; see ``_cstep_py.cstep_iterate``."""
    cdef double logdet = 0.0
    cur = np.ascontiguousarray(idx, dtype=np.int64)
    ws = _Workspace(C.shape[0], C.shape[1])
    trace = []
    prev = None
    while True:
        if _run_pass(C, R, psi, exx, cur, ws, &logdet):
            raise SingularCovarianceError("subset covariance is not positive definite")
        trace.append(logdet)
        if prev is not None and prev - logdet < tol:
            break
        if len(trace) > max_steps:
            break
        order = np.argsort(ws.dist, kind="stable")
        new_idx = np.sort(order[:m]).astype(np.int64)
        if new_idx.shape[0] == cur.shape[0] and np.array_equal(new_idx, cur):
            break
        prev = logdet
        cur = new_idx
    return cur, np.asarray(trace)
