"""Closed-form truncated Gaussian integrals.

Every moment of the convolution model reduces to one of two shapes:

* ``int_{-inf}^{T} exp(-a x^2 + b x + c) dx``, evaluated with ``log_ndtr``;
* ``int_{-inf}^{T1} int_{-inf}^{T2} exp(-x'A x + b'x + c) dx``, evaluated with
  a bivariate normal CDF (Genz's refinement of the Drezner-Wesolowsky method).

All functions broadcast over leading array dimensions and work in log space,
flushing exponents below :data:`cgpcm.kernels.LOG_FLOOR` to zero.
"""

from __future__ import annotations

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import log_ndtr, ndtr

from .kernels import LOG_FLOOR, safe_exp

_TWO_PI = 2.0 * np.pi

# 20-point Gauss-Legendre rule mapped onto [0, 2] (nodes) with unit-interval weights.
_GL_X, _GL_W = leggauss(20)
_GL_X = _GL_X + 1.0


class NumericalAccuracyError(ArithmeticError):
    """A closed-form evaluation produced a value outside its valid range."""


def _check_a(a):
    a = np.asarray(a, dtype=float)
    if np.any(~(a > 0)):
        raise ValueError("quadratic coefficient a must be positive")
    return a


def log_half_line_gaussian_integral(a, b, c, upper):
    """Log of ``int_{-inf}^{upper} exp(-a x^2 + b x + c) dx`` for ``a > 0``."""
    a = _check_a(a)
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float)
    upper = np.asarray(upper, dtype=float)
    mean = b / (2 * a)
    z = np.sqrt(2 * a) * (upper - mean)
    return 0.5 * np.log(np.pi / a) + c + b * mean / 2 + log_ndtr(z)


def half_line_gaussian_integral(a, b, c, upper):
    """``int_{-inf}^{upper} exp(-a x^2 + b x + c) dx`` via the error function.

    ``upper`` may be ``+inf``, giving the full-line integral
    ``sqrt(pi / a) exp(c + b^2 / (4 a))``.

    Raises
    ------
    ValueError
        If any ``a <= 0``.
    """
    return safe_exp(log_half_line_gaussian_integral(a, b, c, upper))


def gaussian_integral_1d(a, b, c, lower=-np.inf, upper=np.inf):
    """``int_{lower}^{upper} exp(-a x^2 + b x + c) dx`` with either limit possibly infinite."""
    a = _check_a(a)
    b = np.asarray(b, dtype=float)
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if np.all(np.isneginf(lower)):
        return half_line_gaussian_integral(a, b, c, upper)
    if np.all(np.isposinf(upper)):
        # Reflect x -> -x so the lower limit becomes an upper one.
        return half_line_gaussian_integral(a, -b, c, -lower)
    mean = b / (2 * a)
    s = np.sqrt(2 * a)
    scale = safe_exp(0.5 * np.log(np.pi / a) + np.asarray(c) + b * mean / 2)
    return scale * (ndtr(s * (upper - mean)) - ndtr(s * (lower - mean)))


def _bvnu_low_corr(h, k, r):
    """Upper bivariate normal probability for ``|r| < 0.925`` (Plackett's identity)."""
    hk = h * k
    hs = 0.5 * (h * h + k * k)
    asr = 0.5 * np.arcsin(r)
    sn = np.sin(asr[..., None] * _GL_X)
    terms = np.exp((sn * hk[..., None] - hs[..., None]) / (1.0 - sn * sn))
    bvn = terms @ _GL_W
    return bvn * asr / _TWO_PI + ndtr(-h) * ndtr(-k)


def _bvnu_high_corr(h, k, r):
    """Upper bivariate normal probability for ``|r| >= 0.925``."""
    neg = r < 0
    k = np.where(neg, -k, k)
    hk = h * k
    bvn = np.zeros_like(h)

    inner = np.abs(r) < 1
    if np.any(inner):
        hi, ki, ri, hki = h[inner], k[inner], r[inner], hk[inner]
        as_ = 1.0 - ri * ri
        a = np.sqrt(as_)
        bs = (hi - ki) ** 2
        asr = -0.5 * (bs / as_ + hki)
        c = (4.0 - hki) / 8.0
        d = (12.0 - hki) / 80.0
        val = np.where(
            asr > -100,
            a * np.exp(np.maximum(asr, -100)) * (1 - c * (bs - as_) * (1 - d * bs) / 3 + c * d * as_ * as_),
            0.0,
        )
        b = np.sqrt(bs)
        sp = np.sqrt(_TWO_PI) * ndtr(-b / a)
        val = val - np.where(
            hki > -100,
            np.exp(-0.5 * np.minimum(hki, 100)) * sp * b * (1 - c * bs * (1 - d * bs) / 3),
            0.0,
        )
        a2 = a / 2
        xs = (a2[:, None] * _GL_X) ** 2
        asr2 = -0.5 * (bs[:, None] / xs + hki[:, None])
        valid = asr2 > -100
        sp2 = 1 + c[:, None] * xs * (1 + 5 * d[:, None] * xs)
        rs = np.sqrt(1 - xs)
        ep = np.exp(-(hki[:, None] / 2) * xs / (1 + rs) ** 2) / rs
        contrib = np.where(valid, np.exp(np.where(valid, asr2, 0.0)) * (sp2 - ep), 0.0)
        val = (a2 * (contrib @ _GL_W) - val) / _TWO_PI
        bvn[inner] = val

    pos = r > 0
    out = np.where(pos, bvn + ndtr(-np.maximum(h, k)), 0.0)
    # r < 0 branch (k already negated above)
    neg_branch = np.where(
        h >= k,
        -bvn,
        np.where(h < 0, ndtr(k) - ndtr(h), ndtr(-h) - ndtr(-k)) - bvn,
    )
    return np.where(pos, out, neg_branch)


_TAIL_X, _TAIL_W = leggauss(24)
_TAIL_X = 0.5 * (_TAIL_X + 1.0)
_TAIL_W = 0.5 * _TAIL_W
_GRADING = (1 / 4096, 1 / 512, 1 / 64, 1 / 8, 1.0)
#: Below this probability the Genz value is replaced by the tail integral.
TAIL_THRESHOLD = 1e-8


def _log_tail_integrand(x, h, k, r, s):
    """``log phi(x) + log Phi((k - r x) / s)`` and its first two derivatives."""
    z = (k - r * x) / s
    lphi = -0.5 * x * x - 0.5 * np.log(_TWO_PI)
    lcdf = log_ndtr(z)
    lam = np.exp(-0.5 * z * z - 0.5 * np.log(_TWO_PI) - lcdf)
    d1 = -x - (r / s) * lam
    d2 = -1.0 - (r / s) ** 2 * lam * (z + lam)
    return lphi + lcdf, d1, np.minimum(d2, -1.0)


def _log_bvn_tail(h, k, r):
    """``log P(X <= h, Y <= k)`` by integrating ``phi(x) Phi((k - r x) / s)`` over ``x <= h``.

    The integrand is log-concave with curvature at least one, so a window
    around its mode where it stays within ``exp(-40)`` of the peak holds all
    but a negligible fraction of the mass. Each side of the mode is covered by
    panels graded geometrically toward the mode (24-point Gauss-Legendre each).
    """
    s = np.sqrt((1 - r) * (1 + r))
    L = lambda x: _log_tail_integrand(x, h, k, r, s)  # noqa: E731

    # Bracket the mode: L' < 0 at hi, L' > 0 at lo.
    _, d_h, _ = L(h)
    at_edge = d_h >= 0
    hi = h.copy()
    step = np.ones_like(h)
    lo = h - step
    for _ in range(60):
        _, d_lo, _ = L(lo)
        need = (d_lo <= 0) & ~at_edge
        if not np.any(need):
            break
        hi = np.where(need, lo, hi)
        step = np.where(need, 2 * step, step)
        lo = np.where(need, lo - step, lo)
    # Safeguarded Newton on L'.
    x = np.where(at_edge, h, 0.5 * (lo + hi))
    for _ in range(80):
        _, d1, d2 = L(x)
        lo = np.where(d1 > 0, x, lo)
        hi = np.where(d1 > 0, hi, x)
        xn = x - d1 / d2
        bad = ~((xn > lo) & (xn < hi))
        xn = np.where(bad, 0.5 * (lo + hi), xn)
        x = np.where(at_edge, h, xn)
    mode = x
    peak, _, _ = L(mode)

    def boundary(direction, limit):
        # Point between mode and limit where L has dropped by 40 (or the limit).
        a = mode.copy()
        b = limit
        Lb, _, _ = L(b)
        inside = Lb >= peak - 40
        for _ in range(60):
            mid = 0.5 * (a + b)
            Lm, _, _ = L(mid)
            above = Lm >= peak - 40
            a = np.where(above, mid, a)
            b = np.where(above, b, mid)
        return np.where(inside, limit, b)

    left = boundary(-1, mode - 10.0)
    right = boundary(1, np.minimum(h, mode + 10.0))

    def panels(edge):
        # Panels graded geometrically toward the mode, where sharp features sit.
        width = edge - mode
        out = []
        prev = np.zeros_like(mode)
        for f in _GRADING:
            a = mode + prev * width
            b = mode + f * width
            w = np.abs(b - a)
            nodes = a[:, None] + (b - a)[:, None] * _TAIL_X
            vals, _, _ = L(nodes.T)
            out.append(np.log(np.maximum(w, 1e-300))[:, None] + vals.T - peak[:, None] + np.log(_TAIL_W))
            prev = np.full_like(mode, f)
        return out

    terms = np.concatenate(panels(left) + panels(right), axis=1)
    mx = np.max(terms, axis=1, keepdims=True)
    return peak + mx[:, 0] + np.log(np.sum(np.exp(terms - mx), axis=1))


def bvn_upper(h, k, r):
    """``P(X > h, Y > k)`` for a standard bivariate normal with correlation ``r``.

    Uses Genz's 2004 algorithm (after Drezner and Wesolowsky 1990), accurate
    to about 1e-15 absolute; results below :data:`TAIL_THRESHOLD` are
    recomputed by a log-concave tail integral for full relative accuracy.
    Infinite limits are allowed.
    """
    return np.exp(log_bvn_upper(h, k, r))


def log_bvn_upper(h, k, r):
    """Logarithm of :func:`bvn_upper`, accurate far into the tails."""
    h, k, r = np.broadcast_arrays(
        np.asarray(h, dtype=float), np.asarray(k, dtype=float), np.asarray(r, dtype=float)
    )
    shape = h.shape
    p = _bvn_upper_genz(h, k, r).ravel()
    with np.errstate(divide="ignore"):
        out = np.log(p)
    h, k, r = h.ravel(), k.ravel(), r.ravel()
    tail = (p < TAIL_THRESHOLD) & np.isfinite(h) & np.isfinite(k) & (np.abs(r) < 1 - 1e-12)
    if np.any(tail):
        # Skip cases that underflow regardless: P <= min(Phi(-h), Phi(-k)).
        bound = np.minimum(log_ndtr(-h[tail]), log_ndtr(-k[tail]))
        idx = np.flatnonzero(tail)[bound > -1400]
        if idx.size:
            out[idx] = _log_bvn_tail(-h[idx], -k[idx], r[idx])
    return out.reshape(shape)


def _bvn_upper_genz(h, k, r):
    h, k, r = np.broadcast_arrays(
        np.asarray(h, dtype=float), np.asarray(k, dtype=float), np.asarray(r, dtype=float)
    )
    shape = h.shape
    h, k, r = h.ravel().copy(), k.ravel().copy(), r.ravel().copy()
    if np.any(np.abs(r) > 1):
        raise ValueError("correlation must lie in [-1, 1]")
    out = np.empty_like(h)

    inf_h = np.isinf(h)
    inf_k = np.isinf(k)
    special = inf_h | inf_k
    # P(X > h) style marginals when the other limit is -inf, zero when any limit is +inf.
    out[special] = np.where(
        np.isposinf(h[special]) | np.isposinf(k[special]),
        0.0,
        np.where(
            np.isneginf(h[special]) & np.isneginf(k[special]),
            1.0,
            np.where(np.isneginf(h[special]), ndtr(-k[special]), ndtr(-h[special])),
        ),
    )
    reg = ~special
    if np.any(reg):
        hr, kr, rr = h[reg], k[reg], r[reg]
        res = np.empty_like(hr)
        low = np.abs(rr) < 0.925
        if np.any(low):
            res[low] = _bvnu_low_corr(hr[low], kr[low], rr[low])
        if np.any(~low):
            res[~low] = _bvnu_high_corr(hr[~low], kr[~low], rr[~low])
        out[reg] = res
    if not np.all(np.isfinite(out)):
        raise NumericalAccuracyError("bivariate normal CDF produced non-finite values")
    return np.clip(out, 0.0, 1.0).reshape(shape)


def bvn_cdf(h, k, r):
    """``P(X <= h, Y <= k)`` for a standard bivariate normal with correlation ``r``."""
    return bvn_upper(-np.asarray(h, dtype=float), -np.asarray(k, dtype=float), r)


def log_bvn_cdf(h, k, r):
    return log_bvn_upper(-np.asarray(h, dtype=float), -np.asarray(k, dtype=float), r)


def quadrant_gaussian_integral(A, b, c, upper):
    """``int_{-inf}^{T1} int_{-inf}^{T2} exp(-x'Ax + b'x + c) dx2 dx1``.

    Parameters
    ----------
    A : array_like, shape (..., 2, 2)
        Symmetric positive definite quadratic form.
    b : array_like, shape (..., 2)
    c : array_like, shape (...)
    upper : array_like, shape (..., 2)
        Upper limits ``(T1, T2)``; entries may be ``+inf``.

    Raises
    ------
    ValueError
        If any ``A`` is not symmetric positive definite.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float)
    upper = np.asarray(upper, dtype=float)
    a11, a12, a21, a22 = A[..., 0, 0], A[..., 0, 1], A[..., 1, 0], A[..., 1, 1]
    if not np.allclose(a12, a21, rtol=1e-12, atol=0):
        raise ValueError("quadratic form must be symmetric")
    det = a11 * a22 - a12 * a12
    if np.any(~(a11 > 0)) or np.any(~(det > 0)):
        raise ValueError("quadratic form must be positive definite")
    # Gaussian with precision 2A: covariance (2A)^{-1}, mean (2A)^{-1} b.
    s11 = a22 / (2 * det)
    s22 = a11 / (2 * det)
    s12 = -a12 / (2 * det)
    m1 = s11 * b[..., 0] + s12 * b[..., 1]
    m2 = s12 * b[..., 0] + s22 * b[..., 1]
    sd1 = np.sqrt(s11)
    sd2 = np.sqrt(s22)
    rho = np.clip(s12 / (sd1 * sd2), -1.0, 1.0)
    log_prob = log_bvn_cdf((upper[..., 0] - m1) / sd1, (upper[..., 1] - m2) / sd2, rho)
    log_scale = np.log(np.pi) - 0.5 * np.log(det) + c + 0.5 * (b[..., 0] * m1 + b[..., 1] * m2)
    return safe_exp(log_scale + log_prob)


def full_plane_gaussian_integral(A, b, c):
    """``int_{R^2} exp(-x'Ax + b'x + c) dx = pi / sqrt(det A) exp(c + b'A^{-1}b / 4)``."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    det = A[..., 0, 0] * A[..., 1, 1] - A[..., 0, 1] * A[..., 1, 0]
    if np.any(~(det > 0)) or np.any(~(A[..., 0, 0] > 0)):
        raise ValueError("quadratic form must be positive definite")
    q = (A[..., 1, 1] * b[..., 0] ** 2 - 2 * A[..., 0, 1] * b[..., 0] * b[..., 1] + A[..., 0, 0] * b[..., 1] ** 2) / det
    return safe_exp(np.log(np.pi) - 0.5 * np.log(det) + np.asarray(c, dtype=float) + q / 4)


__all__ = [
    "LOG_FLOOR",
    "NumericalAccuracyError",
    "bvn_cdf",
    "bvn_upper",
    "log_bvn_cdf",
    "log_bvn_upper",
    "full_plane_gaussian_integral",
    "gaussian_integral_1d",
    "half_line_gaussian_integral",
    "log_half_line_gaussian_integral",
    "quadrant_gaussian_integral",
]
