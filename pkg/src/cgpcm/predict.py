"""Posterior summaries of ``f``, the kernel, the filter and the PSD, plus held-out metrics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _linalg as la
from .kernels import gram, k_h
from .mf import MFState, Observations
from .moments import MomentTensors
from .prior import InducingLayout, filter_autocorrelation_terms, psd_of_kernel
from .smf import SMFPosterior

#: Credible bands are mean +- BAND_SDS posterior standard deviations.
BAND_SDS = 2.0


@dataclass(frozen=True)
class PosteriorSummary:
    """Posterior mean and variance of a curve on ``grid``, with +-2 sd bands."""

    grid: np.ndarray
    mean: np.ndarray
    var: np.ndarray
    kind: str = "f"
    extra: dict = field(default_factory=dict)

    @property
    def sd(self):
        return np.sqrt(np.maximum(self.var, 0.0))

    @property
    def lower(self):
        return self.mean - BAND_SDS * self.sd

    @property
    def upper(self):
        return self.mean + BAND_SDS * self.sd


def _u_samples(posterior, max_samples):
    S = posterior.u_samples
    if max_samples is not None and S.shape[0] > max_samples:
        idx = np.linspace(0, S.shape[0] - 1, max_samples).round().astype(int)
        return idx, S[idx]
    return np.arange(S.shape[0]), S


def _check_compatible(tensors: MomentTensors, hp, n_u, layout: InducingLayout | None = None):
    if tensors.mode is not hp.mode or tensors.Ahx.shape[1] != n_u:
        raise ValueError("grid tensors do not match the posterior's mode or inducing layout")
    if layout is not None and not (
        np.array_equal(tensors.layout.t_u, layout.t_u) and np.array_equal(tensors.layout.t_z, layout.t_z)
    ):
        raise ValueError("grid tensors were assembled for a different inducing layout")


def predict_function(grid_tensors: MomentTensors, posterior, train_tensors: MomentTensors | None = None,
                     obs: Observations | None = None, observed=False, max_samples=200) -> PosteriorSummary:
    """Marginal posterior of ``f`` (or ``y`` when ``observed``) at the grid of ``grid_tensors``.

    Mean-field posteriors are marginalized in closed form:
    ``Var = E_q[Var(f | u, z)] + Var_q[E(f | u, z)]``. Structured posteriors
    average the analytic ``q(z | u)`` moments over (at most ``max_samples``)
    samples of ``u``; this needs the training tensors and observations.
    """
    T = grid_tensors
    if isinstance(posterior, MFState):
        hp = posterior.hp
        _check_compatible(T, hp, posterior.q_u.dim)
        q_u, q_z = posterior.q_u, posterior.q_z
        Su, Sz = q_u.second_moment, q_z.second_moment
        mu = np.einsum("i,tij,j->t", q_u.mean, T.Ahx, q_z.mean)
        e_var = T.b + np.einsum("ij,tij->t", Su, T.Bh) + np.einsum("ij,tij->t", Sz, T.Bx)
        e_sq = np.einsum("tik,kl,tjl,ij->t", T.Ahx, Sz, T.Ahx, Su)
        mean = hp.sigma_f * mu
        var = hp.sigma_f**2 * (e_var + e_sq - mu**2)
    elif isinstance(posterior, SMFPosterior):
        if train_tensors is None or obs is None:
            raise ValueError("structured posteriors need the training tensors and observations")
        hp = posterior.hp
        _check_compatible(T, hp, posterior.u_samples.shape[1], train_tensors.layout)
        idx, U = _u_samples(posterior, max_samples)
        means = np.empty((len(idx), T.n))
        second = np.empty((len(idx), T.n))
        for k, (i, u) in enumerate(zip(idx, U)):
            qz = posterior.qz(int(i), train_tensors, obs)
            Sz = qz.second_moment
            g = np.einsum("i,tij->tj", u, T.Ahx)  # (n, n_z)
            means[k] = g @ qz.mean
            second[k] = (
                T.b
                + np.einsum("i,tij,j->t", u, T.Bh, u)
                + np.einsum("ij,tij->t", Sz, T.Bx)
                + np.einsum("ti,ij,tj->t", g, Sz, g)
            )
        mu = means.mean(axis=0)
        mean = hp.sigma_f * mu
        var = hp.sigma_f**2 * (second.mean(axis=0) - mu**2)
    else:
        raise TypeError(f"unsupported posterior type {type(posterior).__name__}")
    var = np.maximum(var, 0.0)
    if observed:
        var = var + hp.sigma2_noise
    return PosteriorSummary(T.times, mean, var, "y" if observed else "f")


def _u_moments(posterior):
    """Mean and second moment of the whitened ``u`` under the posterior."""
    if isinstance(posterior, MFState):
        return posterior.q_u.mean, posterior.q_u.second_moment
    U = posterior.u_samples
    return U.mean(axis=0), U.T @ U / U.shape[0]


def predict_kernel(lags, posterior, layout: InducingLayout, slope_eps=1e-4) -> PosteriorSummary:
    """Posterior of the expected kernel ``sigma_f^2 (base(r) + u_w' J(r) u_w - tr(K_u^{-1} J(r)))``.

    The variance is over ``q(u)``: closed form for mean-field posteriors
    (``2 tr(J S J S) + 4 m' J S J m``), empirical over samples otherwise.
    ``extra["slope_at_origin"]`` is a one-sided finite difference of the mean
    curve at ``0+``, to compare with ``-sigma_f^2 h(0)^2 / 2``.
    """
    hp = posterior.hp
    lags = np.asarray(lags, dtype=float)
    base, J = filter_autocorrelation_terms(lags, layout.t_u, hp)
    corr = np.einsum("ij,lij->l", layout.K_u_inv, J)
    s2 = hp.sigma_f**2
    if isinstance(posterior, MFState):
        m, S = posterior.q_u.mean, posterior.q_u.cov
        mean = s2 * (base + np.einsum("ij,lij->l", np.outer(m, m) + S, J) - corr)
        JS = J @ S
        var = s2**2 * (2 * np.einsum("lij,lji->l", JS, JS) + 4 * np.einsum("i,lij,jk,lkm,m->l", m, J, S, J, m))
    else:
        U = posterior.u_samples
        curves = s2 * (base[None] + np.einsum("si,lij,sj->sl", U, J, U) - corr[None])
        mean = curves.mean(axis=0)
        var = curves.var(axis=0)

    def mean_curve(r):
        b, Jr = filter_autocorrelation_terms(r, layout.t_u, hp)
        _, Su = _u_moments(posterior)
        return s2 * (b + np.einsum("ij,lij->l", Su - layout.K_u_inv, Jr))

    r0 = np.array([0.0, slope_eps, 2 * slope_eps])
    k0, k1, k2 = mean_curve(r0)
    slope = (-3 * k0 + 4 * k1 - k2) / (2 * slope_eps)
    return PosteriorSummary(lags, mean, np.maximum(var, 0.0), "kernel", {"slope_at_origin": float(slope)})


def predict_filter(tau, posterior, layout: InducingLayout) -> PosteriorSummary:
    """Posterior of the scaled filter ``sigma_f h(tau)``; zero for ``tau < 0`` in causal mode."""
    hp = posterior.hp
    tau = np.asarray(tau, dtype=float).reshape(-1)
    Kx = gram(k_h, tau, layout.t_u, hp)
    m, Su = _u_moments(posterior)
    C = Su - np.outer(m, m)
    V = la.tri_solve(layout.chol_u, Kx.T)
    cond_var = k_h(tau, tau, hp) - np.sum(V**2, axis=0)
    mean = hp.sigma_f * (Kx @ m)
    var = hp.sigma_f**2 * (np.maximum(cond_var, 0.0) + np.einsum("ti,ij,tj->t", Kx, C, Kx))
    if hp.causal:
        mask = tau < 0
        mean = np.where(mask, 0.0, mean)
        var = np.where(mask, 0.0, var)
    return PosteriorSummary(tau, mean, var, "filter")


def predict_psd(lags, posterior, layout: InducingLayout, freqs=None, n_samples=200, seed=0) -> PosteriorSummary:
    """PSD of kernel curves for ``u`` drawn from the posterior; mean and variance across draws.

    ``lags`` must be a uniform grid (symmetric, or starting at zero).
    """
    hp = posterior.hp
    lags = np.asarray(lags, dtype=float)
    base, J = filter_autocorrelation_terms(lags, layout.t_u, hp)
    corr = np.einsum("ij,lij->l", layout.K_u_inv, J)
    if isinstance(posterior, MFState):
        rng = np.random.default_rng(seed)
        L = posterior.q_u.chol
        U = posterior.q_u.mean + rng.standard_normal((n_samples, layout.n_u)) @ L.T
    else:
        _, U = _u_samples(posterior, n_samples)
    curves = hp.sigma_f**2 * (base[None] + np.einsum("si,lij,sj->sl", U, J, U) - corr[None])
    psds = np.array([psd_of_kernel(c, lags, freqs).psd for c in curves])
    f = psd_of_kernel(curves[0], lags, freqs).freqs
    return PosteriorSummary(f, psds.mean(axis=0), psds.var(axis=0), "psd", {"n_negative": int(np.sum(psds.mean(axis=0) < 0))})


def smse(predictions, truth) -> float:
    """Mean squared error divided by the variance of ``truth``."""
    p = np.asarray(predictions, dtype=float).reshape(-1)
    y = np.asarray(truth, dtype=float).reshape(-1)
    if p.shape != y.shape or y.size < 2:
        raise ValueError("predictions and truth must have equal length of at least 2")
    v = np.var(y)
    if not v > 0:
        raise ValueError("truth has zero variance")
    return float(np.mean((p - y) ** 2) / v)


def mll(pred_means, pred_vars, truth) -> float:
    """Mean over points of ``1/2 log(2 pi s2_i) + (y_i - m_i)^2 / (2 s2_i)``."""
    m = np.asarray(pred_means, dtype=float).reshape(-1)
    v = np.asarray(pred_vars, dtype=float).reshape(-1)
    y = np.asarray(truth, dtype=float).reshape(-1)
    if not (m.shape == v.shape == y.shape):
        raise ValueError("inputs must have equal length")
    if np.any(~(v > 0)):
        raise ValueError("predictive variances must be positive")
    return float(np.mean(0.5 * np.log(2 * np.pi * v) + (y - m) ** 2 / (2 * v)))


__all__ = [
    "BAND_SDS",
    "PosteriorSummary",
    "mll",
    "predict_filter",
    "predict_function",
    "predict_kernel",
    "predict_psd",
    "smse",
]
