# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the hot numerical kernels (see ``_pykernels``)."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, sqrt, log, erfc, INFINITY, M_PI
from scipy.linalg.cython_lapack cimport dpotrf, dpotrs

cnp.import_array()

cdef double SQRT5 = sqrt(5.0)
cdef double INV_SQRT2 = 1.0 / sqrt(2.0)
cdef double _JITTER_START = 1e-10
cdef double _JITTER_MAX = 1e-4

MATERN52 = 0
SQEXP = 1
JITTER_START = _JITTER_START
JITTER_MAX = _JITTER_MAX


cdef void _fill_kernel(const double[:, ::1] A, const double[:, ::1] B,
                       const double[::1] inv_ls, double sv, int kind,
                       double[:, ::1] out) noexcept nogil:
    cdef Py_ssize_t i, j, k
    cdef Py_ssize_t m = A.shape[0], n = B.shape[0], d = A.shape[1]
    cdef double d2, t, s5r
    for i in range(m):
        for j in range(n):
            d2 = 0.0
            for k in range(d):
                t = (A[i, k] - B[j, k]) * inv_ls[k]
                d2 = d2 + t * t
            if kind == 0:
                s5r = SQRT5 * sqrt(d2)
                out[i, j] = sv * (1.0 + s5r + s5r * s5r / 3.0) * exp(-s5r)
            else:
                out[i, j] = sv * exp(-0.5 * d2)


cdef void _fill_sym_kernel(const double[:, ::1] X, const double[::1] inv_ls,
                           double sv, int kind, double[:, ::1] out) noexcept nogil:
    cdef Py_ssize_t i, j, k
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1]
    cdef double d2, t, s5r, v
    for i in range(n):
        out[i, i] = sv
        for j in range(i):
            d2 = 0.0
            for k in range(d):
                t = (X[i, k] - X[j, k]) * inv_ls[k]
                d2 = d2 + t * t
            if kind == 0:
                s5r = SQRT5 * sqrt(d2)
                v = sv * (1.0 + s5r + s5r * s5r / 3.0) * exp(-s5r)
            else:
                v = sv * exp(-0.5 * d2)
            out[i, j] = v
            out[j, i] = v


def kernel_matrix(A, B, inv_ls, double signal_variance, int kind):
    """Cross-covariance matrix ``k(A[i], B[j])`` of shape (len(A), len(B))."""
    cdef const double[:, ::1] a = np.ascontiguousarray(A, dtype=np.float64)
    cdef const double[:, ::1] b = np.ascontiguousarray(B, dtype=np.float64)
    cdef const double[::1] il = np.ascontiguousarray(inv_ls, dtype=np.float64)
    out = np.empty((a.shape[0], b.shape[0]), dtype=np.float64)
    cdef double[:, ::1] o = out
    with nogil:
        _fill_kernel(a, b, il, signal_variance, kind, o)
    return out


cdef int _potrf(double[:, ::1] M) noexcept nogil:
    # Row-major symmetric M is its own column-major transpose.
    cdef char uplo = b'L'
    cdef int n = <int>M.shape[0]
    cdef int info = 0
    dpotrf(&uplo, &n, &M[0, 0], &n, &info)
    return info


def log_marginal_likelihood(X, resid, inv_ls, double signal_variance,
                            double noise_variance, int kind):
    """Gaussian log marginal likelihood; returns ``(value, jitter)``.

    Uses the same jitter ladder as the Python backend; ``value`` is ``-inf``
    when no factorization succeeded.
    """
    cdef const double[:, ::1] x = np.ascontiguousarray(X, dtype=np.float64)
    cdef const double[::1] il = np.ascontiguousarray(inv_ls, dtype=np.float64)
    cdef const double[::1] r = np.ascontiguousarray(resid, dtype=np.float64)
    cdef int n = <int>x.shape[0]
    base = np.empty((n, n), dtype=np.float64)
    work = np.empty((n, n), dtype=np.float64)
    cdef double[:, ::1] K = base
    cdef double[:, ::1] W = work
    alpha_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] alpha = alpha_arr
    cdef Py_ssize_t i, j
    cdef double jitter = 0.0
    cdef double last = 0.0
    cdef double limit = _JITTER_MAX * signal_variance * (1.0 + 1e-9)
    cdef int info
    cdef int nrhs = 1
    cdef char uplo = b'L'
    cdef double quad = 0.0, logdet = 0.0

    with nogil:
        _fill_sym_kernel(x, il, signal_variance, kind, K)
        for i in range(n):
            K[i, i] = K[i, i] + noise_variance
        while True:
            for i in range(n):
                for j in range(n):
                    W[i, j] = K[i, j]
                W[i, i] = W[i, i] + jitter
            info = _potrf(W)
            if info == 0:
                break
            if jitter == 0.0:
                jitter = _JITTER_START * signal_variance
            else:
                jitter = jitter * 10.0
            if jitter > limit:
                break
            last = jitter
        if info == 0:
            for i in range(n):
                alpha[i] = r[i]
            dpotrs(&uplo, &n, &nrhs, &W[0, 0], &n, &alpha[0], &n, &info)
            for i in range(n):
                quad = quad + r[i] * alpha[i]
                logdet = logdet + log(W[i, i])
    if info != 0:
        return -INFINITY, last
    return -0.5 * quad - logdet - 0.5 * n * log(2.0 * M_PI), jitter


def expected_improvement(mean, std, double f_best, double xi):
    """Vectorized closed-form EI (maximization), exact limit where std == 0."""
    cdef const double[::1] mu = np.ascontiguousarray(mean, dtype=np.float64)
    cdef const double[::1] sd = np.ascontiguousarray(std, dtype=np.float64)
    cdef Py_ssize_t i, m = mu.shape[0]
    out = np.empty(m, dtype=np.float64)
    cdef double[::1] o = out
    cdef double imp, z, v
    cdef double inv_sqrt_2pi = 1.0 / sqrt(2.0 * M_PI)
    with nogil:
        for i in range(m):
            imp = mu[i] - f_best - xi
            if sd[i] > 0.0:
                z = imp / sd[i]
                v = imp * 0.5 * erfc(-z * INV_SQRT2) + sd[i] * inv_sqrt_2pi * exp(-0.5 * z * z)
                o[i] = v if v > 0.0 else 0.0
            else:
                o[i] = imp if imp > 0.0 else 0.0
    return out
