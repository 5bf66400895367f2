"""Adaptive-quadrature reference integrator.

Used by the test-suite to validate the closed forms in :mod:`cgpcm.integrals`
and :mod:`cgpcm.moments`; never called on the inference path.
"""

from __future__ import annotations

import warnings

import numpy as np
from scipy import integrate


class QuadratureError(RuntimeError):
    """Adaptive quadrature did not reach the requested tolerance."""

    def __init__(self, message, estimate, error):
        super().__init__(f"{message} (estimate={estimate!r}, error={error!r})")
        self.estimate = estimate
        self.error = error


def _quad(f, lo, hi, epsabs, epsrel, points=None, limit=200):
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            kwargs = dict(epsabs=epsabs, epsrel=epsrel, limit=limit)
            if points is not None and np.isfinite(lo) and np.isfinite(hi):
                pts = [p for p in points if lo < p < hi]
                if pts:
                    kwargs["points"] = pts
            val, err = integrate.quad(f, lo, hi, **kwargs)
        except integrate.IntegrationWarning as w:
            # Re-run silently to report the achieved estimate.
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                val, err = integrate.quad(f, lo, hi, epsabs=epsabs, epsrel=epsrel, limit=limit)
            tol = max(epsabs, epsrel * abs(val))
            if not err <= 10 * tol:
                raise QuadratureError(str(w).splitlines()[0], val, err) from None
    return val, err


def _split(lo, hi, center):
    """Split an interval at ``center`` so infinite ranges see the integrand's bulk."""
    if lo < center < hi:
        return [(lo, center), (center, hi)]
    return [(lo, hi)]


def quadrature_oracle(integrand, region, epsabs=0.0, epsrel=1e-12, center=None, return_error=False):
    """Integrate a smooth Gaussian-type function over a (possibly unbounded) rectangle.

    Parameters
    ----------
    integrand : callable
        ``f(x)`` for a 1-D region or ``f(x, y)`` for a 2-D region.
    region : sequence
        ``[(lo, hi)]`` or ``[(lo1, hi1), (lo2, hi2)]``; limits may be infinite.
    center : float or tuple, optional
        Location of the integrand's bulk; unbounded ranges are split there.

    Raises
    ------
    QuadratureError
        If the tolerance is not met; carries the achieved error estimate.
    """
    region = [tuple(map(float, r)) for r in region]
    if len(region) == 1:
        (lo, hi), c = region[0], (0.0 if center is None else float(np.ravel(center)[0]))
        total = err = 0.0
        for a, b in _split(lo, hi, c):
            v, e = _quad(integrand, a, b, epsabs, epsrel)
            total += v
            err += e
        return (total, err) if return_error else total
    if len(region) != 2:
        raise ValueError("region must be one- or two-dimensional")
    (lo1, hi1), (lo2, hi2) = region
    c1, c2 = (0.0, 0.0) if center is None else map(float, center)

    inner_err = [0.0]

    def outer(x):
        total = 0.0
        for a, b in _split(lo2, hi2, c2):
            v, e = _quad(lambda y: integrand(x, y), a, b, epsabs * 1e-3, epsrel * 1e-2)
            total += v
            inner_err[0] = max(inner_err[0], e)
        return total

    total = err = 0.0
    for a, b in _split(lo1, hi1, c1):
        v, e = _quad(outer, a, b, epsabs, epsrel)
        total += v
        err += e
    return (total, err + inner_err[0]) if return_error else total


_PANEL_X, _PANEL_W = np.polynomial.legendre.leggauss(20)


def _panel_rule(lo, hi, panels):
    edges = np.linspace(lo, hi, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    x = (mid[:, None] + half[:, None] * _PANEL_X).ravel()
    w = (half[:, None] * _PANEL_W).ravel()
    return x, w


def panel_quadrature(integrand, region, rtol=1e-13, atol=0.0, start_panels=4, max_panels=512, return_error=False):
    """Composite 20-point Gauss-Legendre rule on a finite rectangle, refined until stable.

    A vectorized companion to :func:`quadrature_oracle` for smooth integrands:
    ``integrand`` receives broadcastable coordinate arrays (one per dimension).
    The panel count is doubled until two successive estimates agree to
    ``max(atol, rtol * |value|)``.

    Raises
    ------
    QuadratureError
        If the estimates have not settled by ``max_panels`` panels per axis.
    """
    region = [tuple(map(float, r)) for r in region]
    if not all(np.isfinite(r).all() for r in region):
        raise ValueError("panel_quadrature needs a finite region")
    ndim = len(region)
    if ndim not in (1, 2):
        raise ValueError("region must be one- or two-dimensional")

    def estimate(panels):
        rules = [_panel_rule(lo, hi, panels) for lo, hi in region]
        if ndim == 1:
            (x, w), = rules
            return float(np.sum(w * integrand(x)))
        (x, wx), (y, wy) = rules
        vals = integrand(x[:, None], y[None, :])
        return float(wx @ vals @ wy)

    panels = start_panels
    prev = estimate(panels)
    while True:
        panels *= 2
        cur = estimate(panels)
        err = abs(cur - prev)
        if err <= max(atol, rtol * abs(cur)):
            return (cur, err) if return_error else cur
        if panels >= max_panels:
            raise QuadratureError("panel refinement did not settle", cur, err)
        prev = cur
