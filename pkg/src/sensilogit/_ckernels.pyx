# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled likelihood kernels; same contract as ``_pykernels``."""
import numpy as np

from libc.math cimport exp, log, sqrt, fabs, isfinite, M_PI

cdef double PROB_FLOOR = 1e-300
cdef double LOG_FLOOR = log(1e-300)
cdef int NEWTON_STEPS = 60
cdef double NEWTON_TOL = 1e-10
cdef double INF = float("inf")


cdef inline void _expit2(double x, double* F, double* Fc) noexcept nogil:
    # logistic(x) and 1 - logistic(x) from a single exp
    cdef double e
    if x >= 0:
        e = exp(-x)
        F[0] = 1.0 / (1.0 + e)
        Fc[0] = e / (1.0 + e)
    else:
        e = exp(x)
        F[0] = e / (1.0 + e)
        Fc[0] = 1.0 / (1.0 + e)


cdef struct ObsTerms:
    double logp
    double s1
    double s2
    double dup
    double dlo
    bint floored


cdef inline ObsTerms _obs(double up, double lo, double shift) noexcept nogil:
    # up = +inf / lo = -inf mark the open ends of the response range
    cdef ObsTerms o
    cdef double A, Ac, B, Bc, fA, fB, pi
    up = up + shift
    lo = lo + shift
    _expit2(up, &A, &Ac)
    _expit2(lo, &B, &Bc)
    if lo > 0:
        pi = Bc - Ac
    else:
        pi = A - B
    fA = A * Ac
    fB = B * Bc
    if pi > PROB_FLOOR:
        o.logp = log(pi)
        o.dup = fA / pi
        o.dlo = -fB / pi
        o.s1 = (fA - fB) / pi
        o.s2 = (fA * (1.0 - 2.0 * A) - fB * (1.0 - 2.0 * B)) / pi - o.s1 * o.s1
        o.floored = False
    else:
        o.floored = True
        o.logp = LOG_FLOOR
        o.dup = 0.0
        o.dlo = 0.0
        o.s1 = 0.0
        o.s2 = 0.0
    return o


cdef inline void _bounds(const double[:, ::1] eta, const long long[::1] y, Py_ssize_t i,
                         Py_ssize_t K, double* up, double* lo) noexcept nogil:
    cdef long long yi = y[i]
    up[0] = eta[i, yi - 1] if yi <= K else INF
    lo[0] = eta[i, yi - 2] if yi >= 2 else -INF


def fixed_loglik_grad(eta, y):
    eta = np.ascontiguousarray(eta, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.int64)
    cdef const double[:, ::1] E = eta
    cdef const long long[::1] Y = y
    cdef Py_ssize_t n = E.shape[0], K = E.shape[1], i
    D_arr = np.zeros((n, K))
    cdef double[:, ::1] D = D_arr
    cdef double ll = 0.0, up, lo
    cdef long nfloor = 0
    cdef ObsTerms o
    with nogil:
        for i in range(n):
            _bounds(E, Y, i, K, &up, &lo)
            o = _obs(up, lo, 0.0)
            if o.floored:
                nfloor += 1
            ll += o.logp
            if Y[i] <= K:
                D[i, Y[i] - 1] = o.dup
            if Y[i] >= 2:
                D[i, Y[i] - 2] = o.dlo
    return ll, D_arr, int(nfloor)


def mixed_loglik_grad(eta, y, offsets, double sigma, nodes, logw, bint adaptive=True):
    eta = np.ascontiguousarray(eta, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.int64)
    offsets = np.ascontiguousarray(offsets, dtype=np.int64)
    nodes = np.ascontiguousarray(nodes, dtype=np.float64)
    logw = np.ascontiguousarray(logw, dtype=np.float64)
    cdef const double[:, ::1] E = eta
    cdef const long long[::1] Y = y
    cdef const long long[::1] OFF = offsets
    cdef const double[::1] T = nodes
    cdef const double[::1] LW = logw
    cdef Py_ssize_t n = E.shape[0], K = E.shape[1]
    cdef Py_ssize_t G = OFF.shape[0] - 1, Q = T.shape[0]
    ll_arr = np.zeros(G)
    ds_arr = np.zeros(G)
    D_arr = np.zeros((n, K))
    lw_arr = np.zeros(Q)
    maxsize = int(np.diff(offsets).max()) if G > 0 else 0
    buf_arr = np.zeros((Q, maxsize, 3))
    cdef double[:, :, ::1] buf = buf_arr
    zq_arr = np.zeros(Q)
    up_arr = np.zeros(n)
    lo_arr = np.zeros(n)
    cdef double[::1] LL = ll_arr
    cdef double[::1] DS = ds_arr
    cdef double[:, ::1] D = D_arr
    cdef double[::1] lwq = lw_arr
    cdef double[::1] zq = zq_arr
    cdef double[::1] UP = up_arr
    cdef double[::1] LO = lo_arr
    cdef Py_ssize_t g, i, q, it, a, b
    cdef double zhat, h, grad, curv, step, zlo, zhi, znew, s1sum, s2sum, gz, m, tot, p, scale
    cdef double half_log_2pi = 0.5 * log(2.0 * M_PI)
    cdef long nfallback = 0
    cdef bint ok, active
    cdef ObsTerms o
    with nogil:
        for i in range(n):
            _bounds(E, Y, i, K, &UP[i], &LO[i])
        for g in range(G):
            a = OFF[g]
            b = OFF[g + 1]
            zhat = 0.0
            h = 1.0
            if adaptive:
                ok = True
                active = True
                # the mode lies where |z| <= sigma * n_i since each |s1| < 1
                zhi = sigma * (b - a) + 1.0
                zlo = -zhi
                for it in range(NEWTON_STEPS):
                    s1sum = 0.0
                    s2sum = 0.0
                    for i in range(a, b):
                        o = _obs(UP[i], LO[i], sigma * zhat)
                        s1sum += o.s1
                        s2sum += o.s2
                    grad = sigma * s1sum - zhat
                    curv = 1.0 - sigma * sigma * s2sum
                    if not (isfinite(curv) and curv > 0 and isfinite(grad)):
                        ok = False
                        active = False
                        break
                    # concave in z: keep a bracket and bisect when Newton leaves it
                    if grad > 0:
                        zlo = zhat
                    else:
                        zhi = zhat
                    znew = zhat + grad / curv
                    if not (zlo < znew < zhi):
                        znew = 0.5 * (zlo + zhi)
                    step = znew - zhat
                    zhat = znew
                    if fabs(step) < NEWTON_TOL:
                        active = False
                        break
                if active:
                    ok = False
                if ok:
                    s2sum = 0.0
                    for i in range(a, b):
                        o = _obs(UP[i], LO[i], sigma * zhat)
                        s2sum += o.s2
                    h = 1.0 - sigma * sigma * s2sum
                    if not (isfinite(h) and h > 0):
                        ok = False
                if not ok:
                    zhat = 0.0
                    h = 1.0
                    nfallback += 1
            scale = sqrt(2.0 / h)
            m = -INF
            for q in range(Q):
                zq[q] = zhat + scale * T[q]
                gz = -0.5 * zq[q] * zq[q]
                for i in range(a, b):
                    o = _obs(UP[i], LO[i], sigma * zq[q])
                    gz += o.logp
                    buf[q, i - a, 0] = o.dup
                    buf[q, i - a, 1] = o.dlo
                    buf[q, i - a, 2] = o.s1
                lwq[q] = LW[q] + gz
                if lwq[q] > m:
                    m = lwq[q]
            tot = 0.0
            for q in range(Q):
                tot += exp(lwq[q] - m)
            LL[g] = log(scale) - half_log_2pi + m + log(tot)
            DS[g] = 0.0
            for q in range(Q):
                p = exp(lwq[q] - m) / tot
                s1sum = 0.0
                for i in range(a, b):
                    s1sum += buf[q, i - a, 2]
                    if Y[i] <= K:
                        D[i, Y[i] - 1] += p * buf[q, i - a, 0]
                    if Y[i] >= 2:
                        D[i, Y[i] - 2] += p * buf[q, i - a, 1]
                DS[g] += p * zq[q] * s1sum
    return ll_arr, D_arr, ds_arr, int(nfallback)
