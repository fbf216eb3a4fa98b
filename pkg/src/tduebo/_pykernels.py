"""Pure numpy/scipy implementation of the hot numerical kernels.

Mirrors ``_ckernels`` function by function; used whenever the compiled
extension is unavailable or ``TDUEBO_BACKEND=python`` is set.
"""

import math

import numpy as np
from scipy.linalg import LinAlgError, cho_solve, cholesky
from scipy.special import ndtr

MATERN52 = 0
SQEXP = 1

_SQRT5 = math.sqrt(5.0)
_LOG_2PI = math.log(2.0 * math.pi)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
JITTER_START = 1e-10
JITTER_MAX = 1e-4


def kernel_matrix(A, B, inv_ls, signal_variance, kind):
    """Cross-covariance matrix ``k(A[i], B[j])`` of shape (len(A), len(B))."""
    diff = (A[:, None, :] - B[None, :, :]) * inv_ls
    d2 = np.einsum("ijk,ijk->ij", diff, diff)
    if kind == MATERN52:
        s5r = _SQRT5 * np.sqrt(d2)
        return signal_variance * (1.0 + s5r + s5r * s5r / 3.0) * np.exp(-s5r)
    return signal_variance * np.exp(-0.5 * d2)


def jitter_cholesky(K, signal_variance):
    """Lower Cholesky factor of ``K``, adding diagonal jitter on failure.

    Jitter starts at 1e-10 * signal_variance and grows tenfold up to
    1e-4 * signal_variance.  Returns ``(L, jitter)``; ``L`` is None when
    every attempt failed, in which case ``jitter`` is the last value tried.
    """
    try:
        return cholesky(K, lower=True, check_finite=False), 0.0
    except LinAlgError:
        pass
    jitter = JITTER_START * signal_variance
    limit = JITTER_MAX * signal_variance * (1.0 + 1e-9)
    last = jitter
    eye = np.eye(K.shape[0])
    while jitter <= limit:
        last = jitter
        try:
            return cholesky(K + jitter * eye, lower=True, check_finite=False), jitter
        except LinAlgError:
            jitter *= 10.0
    return None, last


def log_marginal_likelihood(X, resid, inv_ls, signal_variance, noise_variance, kind):
    """Gaussian log marginal likelihood of ``resid`` under the kernel.

    Returns ``(value, jitter)``; ``value`` is ``-inf`` when the covariance
    could not be factorized.
    """
    K = kernel_matrix(X, X, inv_ls, signal_variance, kind)
    K[np.diag_indices_from(K)] += noise_variance
    L, jitter = jitter_cholesky(K, signal_variance)
    if L is None:
        return -math.inf, jitter
    alpha = cho_solve((L, True), resid, check_finite=False)
    n = resid.shape[0]
    value = -0.5 * float(resid @ alpha) - float(np.log(np.diag(L)).sum()) - 0.5 * n * _LOG_2PI
    return value, jitter


def expected_improvement(mean, std, f_best, xi):
    """Vectorized closed-form EI (maximization), exact limit where std == 0."""
    imp = mean - f_best - xi
    out = np.maximum(imp, 0.0)
    pos = std > 0.0
    if np.any(pos):
        s = std[pos]
        z = imp[pos] / s
        val = imp[pos] * ndtr(z) + s * _INV_SQRT_2PI * np.exp(-0.5 * z * z)
        out[pos] = np.maximum(val, 0.0)
    return out
