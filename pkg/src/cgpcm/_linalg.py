"""Small dense linear-algebra helpers built on Cholesky factorizations."""

from __future__ import annotations

import numpy as np
from scipy.linalg import cho_solve, solve_triangular


class CholeskyError(np.linalg.LinAlgError):
    """Raised when a matrix cannot be factorized even after maximal jitter."""


def jittered_cholesky(K, max_rel_jitter=1e-6, start_rel_jitter=0.0):
    """Lower Cholesky factor of ``K`` with the smallest jitter that works.

    Jitter is added to the diagonal in multiples of ``trace(K) / n``, growing
    by a factor of ten from ``start_rel_jitter`` up to ``max_rel_jitter``. A
    zero start tries the exact factorization first and then continues from
    ``1e-10``.

    Returns
    -------
    L : ndarray
        Lower-triangular factor with ``L @ L.T == K + jitter * I``.
    jitter : float
        Absolute jitter that was added.
    """
    K = np.asarray(K, dtype=float)
    n = K.shape[0]
    if n == 0:
        return np.zeros((0, 0)), 0.0
    scale = np.trace(K) / n
    if not np.isfinite(scale) or scale <= 0:
        raise CholeskyError("matrix has a nonpositive or non-finite trace")
    if start_rel_jitter <= 0:
        try:
            return np.linalg.cholesky(K), 0.0
        except np.linalg.LinAlgError:
            pass
    rel = start_rel_jitter if start_rel_jitter > 0 else 1e-10
    while rel <= max_rel_jitter * (1 + 1e-12):
        jitter = rel * scale
        try:
            L = np.linalg.cholesky(K + jitter * np.eye(n))
            return L, jitter
        except np.linalg.LinAlgError:
            rel *= 10.0
    raise CholeskyError(
        f"Cholesky failed with jitter up to {max_rel_jitter:g} * trace/n"
    )


def chol(K):
    """Plain Cholesky factor that raises :class:`CholeskyError` on failure."""
    try:
        return np.linalg.cholesky(K)
    except np.linalg.LinAlgError as err:
        raise CholeskyError(str(err)) from err


def chol_solve(L, B):
    return cho_solve((L, True), B, check_finite=False)


def chol_inv(L):
    n = L.shape[0]
    return cho_solve((L, True), np.eye(n), check_finite=False)


def chol_logdet(L):
    return 2.0 * np.sum(np.log(np.diag(L)))


def tri_solve(L, B, trans=False):
    """Solve ``L x = B`` (or ``L.T x = B`` when ``trans``) for lower ``L``."""
    return solve_triangular(L, B, lower=True, trans=1 if trans else 0, check_finite=False)


def sym(A):
    return 0.5 * (A + A.T)


def gaussian_from_precision(precision, rhs):
    """Mean and covariance of the Gaussian with given precision and ``precision @ mean = rhs``.

    Returns ``(mean, cov, L)`` with ``L`` the Cholesky factor of the precision.
    """
    L = chol(sym(precision))
    mean = chol_solve(L, rhs)
    cov = sym(chol_inv(L))
    return mean, cov, L
