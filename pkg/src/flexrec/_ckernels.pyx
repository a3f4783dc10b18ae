# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled batch kernels; same contract as ``_pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport log, lgamma

cnp.import_array()

cdef enum:
    MAXK = 64


cdef inline double _digamma(double x) nogil:
    cdef double acc = 0.0, inv, inv2
    cdef int k
    for k in range(6):
        acc += 1.0 / (x + k)
    x += 6.0
    inv = 1.0 / x
    inv2 = inv * inv
    return (log(x) - 0.5 * inv
            - inv2 * (1.0 / 12 - inv2 * (1.0 / 120 - inv2 * (1.0 / 252 - inv2 * (1.0 / 240 - inv2 / 132))))
            - acc)


cdef inline double _trigamma(double x) nogil:
    cdef double acc = 0.0, inv, inv2, xk
    cdef int k
    for k in range(6):
        xk = x + k
        acc += 1.0 / (xk * xk)
    x += 6.0
    inv = 1.0 / x
    inv2 = inv * inv
    return (inv + 0.5 * inv2
            + inv * inv2 * (1.0 / 6 - inv2 * (1.0 / 30 - inv2 * (1.0 / 42 - inv2 * (1.0 / 30 - inv2 * 5.0 / 66))))
            + acc)


cdef inline void _beliefs(const double* pl, int k, double* excl1, double* b,
                          double* ign, double* unc) nogil:
    cdef double prod, total = 0.0, ig = 1.0
    cdef int i, j
    for i in range(k):
        prod = 1.0
        for j in range(k):
            if j != i:
                prod *= 1.0 - pl[j]
        excl1[i] = prod
        b[i] = pl[i] * prod
        total += b[i]
        ig *= 1.0 - pl[i]
    ign[0] = ig
    unc[0] = 1.0 - total


def opinion_batch(const double[:, ::1] pl):
    cdef Py_ssize_t n = pl.shape[0], r
    cdef int k = <int>pl.shape[1]
    if k > MAXK:
        raise ValueError("too many classes for the compiled kernel")
    beliefs = np.empty((n, k))
    ign = np.empty(n)
    unc = np.empty(n)
    cdef double[:, ::1] bv = beliefs
    cdef double[::1] iv = ign, uv = unc
    cdef double excl1[MAXK]
    with nogil:
        for r in range(n):
            _beliefs(&pl[r, 0], k, excl1, &bv[r, 0], &iv[r], &uv[r])
    return beliefs, ign, unc


def loss_grad_batch(const double[:, ::1] pl, const cnp.int64_t[::1] labels,
                    double lambda_reg, double lambda_kl):
    cdef Py_ssize_t n = pl.shape[0], r
    cdef int k = <int>pl.shape[1]
    if k > MAXK:
        raise ValueError("too many classes for the compiled kernel")
    edl = np.empty(n)
    reg = np.empty(n)
    kl = np.empty(n)
    grad = np.empty((n, k))
    unc = np.empty(n)
    cdef double[::1] ev = edl, rv = reg, kv = kl, uv = unc
    cdef double[:, ::1] gv = grad
    cdef double excl1[MAXK]
    cdef double b[MAXK]
    cdef double alpha[MAXK]
    cdef double coef[MAXK]
    cdef double db[MAXK * MAXK]
    cdef double du[MAXK]
    cdef double ign, u, s, s_t, a_t, resid, dig_s, tri_s, val, prod, dal, g_e, g_k
    cdef double lg_k = lgamma(<double>k)
    cdef const double* p
    cdef int i, j, c, t
    with nogil:
        for r in range(n):
            p = &pl[r, 0]
            t = <int>labels[r]
            _beliefs(p, k, excl1, b, &ign, &u)
            uv[r] = u

            s = 0.0
            for i in range(k):
                alpha[i] = k * b[i] / u + 1.0
                s += alpha[i]
            a_t = alpha[t]
            ev[r] = log(s) - log(a_t)

            resid = p[t] - (1.0 - ign)
            rv[r] = resid * resid

            s_t = s - a_t + 1.0
            dig_s = _digamma(s_t)
            tri_s = _trigamma(s_t)
            val = lgamma(s_t) - lg_k
            for i in range(k):
                if i == t:
                    coef[i] = 0.0
                    continue
                val += -lgamma(alpha[i]) + (alpha[i] - 1.0) * (_digamma(alpha[i]) - dig_s)
                coef[i] = (alpha[i] - 1.0) * _trigamma(alpha[i]) - tri_s * (s_t - k)
            kv[r] = val if val > 0.0 else 0.0

            for c in range(k):
                du[c] = 0.0
            for i in range(k):
                for c in range(k):
                    if c == i:
                        db[i * k + c] = excl1[i]
                    else:
                        prod = 1.0
                        for j in range(k):
                            if j != i and j != c:
                                prod *= 1.0 - p[j]
                        db[i * k + c] = -p[i] * prod
                    du[c] -= db[i * k + c]

            for c in range(k):
                g_e = 0.0
                g_k = 0.0
                for i in range(k):
                    dal = k * (db[i * k + c] * u - b[i] * du[c]) / (u * u)
                    g_e += dal / s
                    if i == t:
                        g_e -= dal / a_t
                    g_k += coef[i] * dal
                gv[r, c] = g_e + lambda_kl * g_k
            gv[r, t] += lambda_reg * 2.0 * resid
    return edl, reg, kl, grad, unc
