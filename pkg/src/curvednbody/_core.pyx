# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernels: force function, gradients, right-hand sides, embedded step.

Mirrors curvednbody._core_py function for function; see that module for the
documented reference semantics.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, sqrt
from libc.stdlib cimport free, malloc

COMPILED = True

MODE_FULL = 0
MODE_PROJECTED = 1
MODE_PUSHFORWARD = 2

OK = 0
SINGULAR_PAIR = 1
NON_RENORMALIZABLE = 2
LEFT_CHART = 3

cdef int _OK = 0
cdef int _SINGULAR_PAIR = 1
cdef int _NON_RENORMALIZABLE = 2
cdef int _LEFT_CHART = 3

cdef int _FULL = 0
cdef int _PROJECTED = 1
cdef int _PUSHFORWARD = 2

# Cash-Karp 5(4) tableau (same values as the python backend).
cdef double[6] _C = [0.0, 1.0 / 5, 3.0 / 10, 3.0 / 5, 1.0, 7.0 / 8]
cdef double[6][5] _A = [
    [0, 0, 0, 0, 0],
    [1.0 / 5, 0, 0, 0, 0],
    [3.0 / 40, 9.0 / 40, 0, 0, 0],
    [3.0 / 10, -9.0 / 10, 6.0 / 5, 0, 0],
    [-11.0 / 54, 5.0 / 2, -70.0 / 27, 35.0 / 27, 0],
    [1631.0 / 55296, 175.0 / 512, 575.0 / 13824, 44275.0 / 110592, 253.0 / 4096],
]
cdef double[6] _B5 = [37.0 / 378, 0.0, 250.0 / 621, 125.0 / 594, 0.0, 512.0 / 1771]
cdef double[6] _B4 = [
    2825.0 / 27648,
    0.0,
    18575.0 / 48384,
    13525.0 / 55296,
    277.0 / 14336,
    1.0 / 4,
]

CK_C = np.asarray([_C[i] for i in range(6)])
CK_B5 = np.asarray([_B5[i] for i in range(6)])
CK_B4 = np.asarray([_B4[i] for i in range(6)])
CK_E = CK_B5 - CK_B4


cdef inline double _dotw(double* a, double* b, int d, double wlast) nogil:
    cdef int k
    cdef double s = 0.0
    for k in range(d - 1):
        s += a[k] * b[k]
    return s + wlast * a[d - 1] * b[d - 1]


cdef int _force_grad_c(int n, int d, double* m, double* q, double kappa,
                       double sigma, double wlast, double denom_tol,
                       double* U_out, double* grad, double* diag,
                       int* bi, int* bj) nogil:
    cdef int i, j, k
    cdef double C, ab, den2, den, d3, base, ci, cj, U
    cdef double sq = sqrt(fabs(kappa))
    cdef double sq3 = sq * sq * sq
    U = 0.0
    if grad != NULL:
        for k in range(n * d):
            grad[k] = 0.0
    for i in range(n):
        diag[i] = kappa * _dotw(q + i * d, q + i * d, d, wlast)
    for i in range(n):
        for j in range(i + 1, n):
            C = kappa * _dotw(q + i * d, q + j * d, d, wlast)
            ab = diag[i] * diag[j]
            den2 = sigma * (ab - C * C)
            if den2 < denom_tol * fabs(ab):
                bi[0] = i
                bj[0] = j
                return _SINGULAR_PAIR
            den = sqrt(den2)
            U += m[i] * m[j] * sq * C / den
            if grad != NULL:
                d3 = den2 * den
                base = m[i] * m[j] * sq3 / d3
                ci = base * diag[j]
                cj = base * diag[i]
                for k in range(d):
                    grad[i * d + k] += ci * (diag[i] * q[j * d + k] - C * q[i * d + k])
                    grad[j * d + k] += cj * (diag[j] * q[i * d + k] - C * q[j * d + k])
    U_out[0] = U
    return _OK


cdef int _rhs_c(int mode, int n, int d, double* m, double* q, double* p,
                double kappa, double sigma, double denom_tol,
                double* dq, double* dp, double* scratch, int* bi, int* bj) nogil:
    # scratch layout: grad (n*d) | diag (n) | lift block (4*n*(d+1) + n*(d+1) + n)
    cdef int i, k, df, status
    cdef double wlast, pp, z2, z, U
    cdef double* grad = scratch
    cdef double* diag = scratch + n * d
    cdef double* qf
    cdef double* pf
    cdef double* dqf
    cdef double* dpf
    cdef double* sub
    if mode == _PUSHFORWARD:
        df = d + 1
        qf = scratch
        pf = qf + n * df
        dqf = pf + n * df
        dpf = dqf + n * df
        sub = dpf + n * df
        for i in range(n):
            z2 = 1.0 / kappa
            pp = 0.0
            for k in range(d):
                z2 -= q[i * d + k] * q[i * d + k]
                pp += q[i * d + k] * p[i * d + k]
            if z2 <= 0.0:
                bi[0] = i
                bj[0] = i
                return _LEFT_CHART
            z = sqrt(z2)
            for k in range(d):
                qf[i * df + k] = q[i * d + k]
                pf[i * df + k] = p[i * d + k]
            qf[i * df + d] = z
            pf[i * df + d] = -pp / z
        status = _rhs_c(_FULL, n, df, m, qf, pf, kappa, sigma, denom_tol,
                        dqf, dpf, sub, bi, bj)
        if status != _OK:
            return status
        for i in range(n):
            for k in range(d):
                dq[i * d + k] = dqf[i * df + k]
                dp[i * d + k] = dpf[i * df + k]
        return _OK
    wlast = sigma if (mode == _FULL and d == 3) else 1.0
    status = _force_grad_c(n, d, m, q, kappa, sigma, wlast, denom_tol,
                           &U, grad, diag, bi, bj)
    if status != _OK:
        return status
    for i in range(n):
        pp = _dotw(p + i * d, p + i * d, d, wlast)
        for k in range(d):
            dq[i * d + k] = p[i * d + k] / m[i]
            dp[i * d + k] = grad[i * d + k] - (kappa * pp / m[i]) * q[i * d + k]
    return _OK


cdef inline int _scratch_size(int n, int d):
    cdef int df = d + 1
    # rhs scratch must cover both the direct case and the pushforward lift
    return n * d + n + 5 * n * df + n


def force_grad(masses, q, double kappa, double sigma, weights, double denom_tol,
               grad_out=None):
    """See curvednbody._core_py.force_grad."""
    cdef double[::1] m = np.ascontiguousarray(masses, dtype=np.float64)
    cdef double[:, ::1] qv = np.ascontiguousarray(q, dtype=np.float64)
    cdef double[::1] wv = np.ascontiguousarray(weights, dtype=np.float64)
    cdef int n = qv.shape[0]
    cdef int d = qv.shape[1]
    cdef double wlast = wv[d - 1]
    cdef double U = 0.0
    cdef int bi = -1, bj = -1, status
    cdef double[:, ::1] gv
    cdef double* gptr = NULL
    cdef double* diag = <double*> malloc(n * sizeof(double))
    if diag == NULL:
        raise MemoryError
    try:
        if grad_out is not None:
            gv = grad_out
            gptr = &gv[0, 0]
        status = _force_grad_c(n, d, &m[0], &qv[0, 0], kappa, sigma, wlast,
                               denom_tol, &U, gptr, diag, &bi, &bj)
    finally:
        free(diag)
    if status != _OK:
        return 0.0, status, bi, bj
    return U, _OK, -1, -1


def rhs(int mode, masses, q, p, double kappa, double sigma, double denom_tol,
        dq_out, dp_out):
    """See curvednbody._core_py.rhs."""
    cdef double[::1] m = np.ascontiguousarray(masses, dtype=np.float64)
    cdef double[:, ::1] qv = np.ascontiguousarray(q, dtype=np.float64)
    cdef double[:, ::1] pv = np.ascontiguousarray(p, dtype=np.float64)
    cdef double[:, ::1] dqv = dq_out
    cdef double[:, ::1] dpv = dp_out
    cdef int n = qv.shape[0]
    cdef int d = qv.shape[1]
    cdef int bi = -1, bj = -1, status
    cdef double* scratch = <double*> malloc(_scratch_size(n, d) * sizeof(double))
    if scratch == NULL:
        raise MemoryError
    try:
        status = _rhs_c(mode, n, d, &m[0], &qv[0, 0], &pv[0, 0], kappa, sigma,
                        denom_tol, &dqv[0, 0], &dpv[0, 0], scratch, &bi, &bj)
    finally:
        free(scratch)
    if status != _OK:
        return status, bi, bj
    return _OK, -1, -1


def renormalize_state(q, p, double kappa, double sigma, q_out, p_out):
    """See curvednbody._core_py.renormalize_state."""
    cdef double[:, ::1] qv = np.ascontiguousarray(q, dtype=np.float64)
    cdef double[:, ::1] pv = np.ascontiguousarray(p, dtype=np.float64)
    cdef double[:, ::1] qo = q_out
    cdef double[:, ::1] po = p_out
    cdef int n = qv.shape[0]
    cdef int d = qv.shape[1]
    cdef int i, k
    cdef double wlast = sigma if d == 3 else 1.0
    cdef double s, tang
    for i in range(n):
        s = kappa * _dotw(&qv[i, 0], &qv[i, 0], d, wlast)
        if s <= 0.0:
            return _NON_RENORMALIZABLE
        s = sqrt(s)
        for k in range(d):
            qo[i, k] = qv[i, k] / s
        tang = kappa * _dotw(&qo[i, 0], &pv[i, 0], d, wlast)
        for k in range(d):
            po[i, k] = pv[i, k] - tang * qo[i, k]
    return _OK


def ck_step(int mode, masses, q, p, double dt, double kappa, double sigma,
            double rtol, double atol, double denom_tol, q_out, p_out):
    """See curvednbody._core_py.ck_step."""
    cdef double[::1] m = np.ascontiguousarray(masses, dtype=np.float64)
    cdef double[:, ::1] qv = np.ascontiguousarray(q, dtype=np.float64)
    cdef double[:, ::1] pv = np.ascontiguousarray(p, dtype=np.float64)
    cdef double[:, ::1] qo = q_out
    cdef double[:, ::1] po = p_out
    cdef int n = qv.shape[0]
    cdef int d = qv.shape[1]
    cdef int N = n * d
    cdef int i, k, s, j, bi = -1, bj = -1, status
    cdef double acc, e, sc, err2, err, tang, snorm
    cdef double wlast = sigma if (mode == _FULL and d == 3) else 1.0
    # buffers: kq,kp (6N each) | qs,ps (N each) | q5,p5 (N each) | rhs scratch
    cdef int rsz = _scratch_size(n, d)
    cdef double* buf = <double*> malloc((16 * N + rsz) * sizeof(double))
    if buf == NULL:
        raise MemoryError
    cdef double* kq = buf
    cdef double* kp = buf + 6 * N
    cdef double* qs = buf + 12 * N
    cdef double* ps = buf + 13 * N
    cdef double* q5 = buf + 14 * N
    cdef double* p5 = buf + 15 * N
    cdef double* scratch = buf + 16 * N
    try:
        with nogil:
            status = _OK
            err = 0.0
            for s in range(6):
                for k in range(N):
                    acc = 0.0
                    for j in range(s):
                        acc += _A[s][j] * kq[j * N + k]
                    qs[k] = (&qv[0, 0])[k] + dt * acc
                    acc = 0.0
                    for j in range(s):
                        acc += _A[s][j] * kp[j * N + k]
                    ps[k] = (&pv[0, 0])[k] + dt * acc
                status = _rhs_c(mode, n, d, &m[0], qs, ps, kappa, sigma,
                                denom_tol, kq + s * N, kp + s * N, scratch,
                                &bi, &bj)
                if status != _OK:
                    break
            if status == _OK:
                err2 = 0.0
                for k in range(N):
                    acc = 0.0
                    e = 0.0
                    for s in range(6):
                        acc += _B5[s] * kq[s * N + k]
                        e += (_B5[s] - _B4[s]) * kq[s * N + k]
                    q5[k] = (&qv[0, 0])[k] + dt * acc
                    e *= dt
                    sc = fabs((&qv[0, 0])[k])
                    if fabs(q5[k]) > sc:
                        sc = fabs(q5[k])
                    sc = atol + rtol * sc
                    err2 += (e / sc) * (e / sc)
                    acc = 0.0
                    e = 0.0
                    for s in range(6):
                        acc += _B5[s] * kp[s * N + k]
                        e += (_B5[s] - _B4[s]) * kp[s * N + k]
                    p5[k] = (&pv[0, 0])[k] + dt * acc
                    e *= dt
                    sc = fabs((&pv[0, 0])[k])
                    if fabs(p5[k]) > sc:
                        sc = fabs(p5[k])
                    sc = atol + rtol * sc
                    err2 += (e / sc) * (e / sc)
                err = sqrt(err2 / (2 * N))
                if mode == _FULL:
                    for i in range(n):
                        snorm = kappa * _dotw(q5 + i * d, q5 + i * d, d, wlast)
                        if snorm <= 0.0:
                            status = _NON_RENORMALIZABLE
                            bi = i
                            bj = i
                            break
                        snorm = sqrt(snorm)
                        for k in range(d):
                            (&qo[0, 0])[i * d + k] = q5[i * d + k] / snorm
                        tang = kappa * _dotw(&qo[i, 0], p5 + i * d, d, wlast)
                        for k in range(d):
                            (&po[0, 0])[i * d + k] = p5[i * d + k] - tang * (&qo[0, 0])[i * d + k]
                else:
                    for k in range(N):
                        (&qo[0, 0])[k] = q5[k]
                        (&po[0, 0])[k] = p5[k]
    finally:
        free(buf)
    if status != _OK:
        if status == _SINGULAR_PAIR or status == _LEFT_CHART:
            return 0.0, status, bi, bj
        return err, status, bi, bj
    return err, _OK, -1, -1
