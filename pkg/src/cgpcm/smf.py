"""Structured mean-field refinement ``q(u, z) = q(u) q(z | u)``.

For fixed ``u`` the optimal ``q(z | u)`` is Gaussian and the optimal ``q(u)``
is proportional to ``p(u) exp(l(u))``, where ``l(u)`` is the collapsed bound
with ``q(u)`` a point mass at ``u``. Its normalizer ``Z`` is the optimal bound
of the structured family. ``q(u)`` is sampled with elliptical slice sampling
and ``log Z`` is estimated by importance sampling from a Gaussian fitted to
the chain.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from . import _linalg as la
from .kernels import Hyperparams
from .mf import MFState, Observations, _Problem, _to_v
from .moments import MomentTensors, WhitenedGaussian

log = logging.getLogger(__name__)

_LOG_2PI = np.log(2 * np.pi)


class SamplerError(RuntimeError):
    """The slice-sampling bracket collapsed without finding an acceptable point."""


def conditional_qz_given_u(u_w, tensors: MomentTensors, obs: Observations, hp: Hyperparams, _problem=None) -> WhitenedGaussian:
    """``q(z | u)``: precision ``K_z + c (sum_t Bx(t) + G'G)`` with rows ``G[t] = Ahx(t)' u_w``.

    ``precision @ mean = (sigma_f / sigma^2) D' u_w``.
    """
    pr = _problem or _Problem(tensors, obs)
    u_w = np.asarray(u_w, dtype=float).reshape(-1)
    c = hp.sigma_f**2 / hp.sigma2_noise
    Lz = pr.layout.chol_z
    G = tensors.stacked(u_w)
    prec_v = np.eye(pr.layout.n_z) + c * _to_v(tensors.Bx_sum + G.T @ G, Lz)
    rhs_v = la.tri_solve(Lz, (hp.sigma_f / hp.sigma2_noise) * (pr.D.T @ u_w))
    mean_v, cov_v, _ = la.gaussian_from_precision(prec_v, rhs_v)
    return WhitenedGaussian.from_standardized(mean_v, cov_v, Lz, "z")


def collapsed_loglik(u_w, tensors, obs, hp, _problem=None) -> float:
    """``l(u)``: the bound with ``q(u)`` a point mass at ``u`` and ``q(z)`` optimal."""
    pr = _problem or _Problem(tensors, obs)
    u_w = np.asarray(u_w, dtype=float).reshape(-1)
    c = hp.sigma_f**2 / hp.sigma2_noise
    Lz = pr.layout.chol_z
    G = tensors.stacked(u_w)
    prec_v = np.eye(pr.layout.n_z) + c * _to_v(tensors.Bx_sum + G.T @ G, Lz)
    try:
        Lp = la.chol(prec_v)
    except np.linalg.LinAlgError:
        return -np.inf
    eta_v = la.tri_solve(Lz, (hp.sigma_f / hp.sigma2_noise) * (pr.D.T @ u_w))
    w = la.tri_solve(Lp, eta_v)
    quad_u = u_w @ tensors.Bh_sum @ u_w
    return float(
        pr.base(hp) - 0.5 * c * (tensors.b_sum + quad_u) + 0.5 * (w @ w) - 0.5 * la.chol_logdet(Lp)
    )


def log_prior_u(u_w, layout) -> float:
    """``log N(u_w; 0, K_u^{-1})``."""
    u_w = np.asarray(u_w, dtype=float).reshape(-1)
    v = layout.chol_u.T @ u_w
    return float(-0.5 * (v @ v) + 0.5 * layout.logdet_K_u - 0.5 * u_w.size * _LOG_2PI)


def log_qu_unnorm(u_w, tensors: MomentTensors, obs: Observations, hp: Hyperparams, _problem=None) -> float:
    """Unnormalized ``log q(u_w) = log p(u_w) + l(u_w)``.

    ``l(u_w) = -n/2 log 2 pi s2 + 1/2 log|K_z| - 1/2 log|Sigma^{-1}| + 1/2 mu' Sigma^{-1} mu
    - |e|^2 / 2 s2 - c/2 (sum_t b(t) + u_w' sum_t Bh(t) u_w)``
    with ``(mu, Sigma)`` from :func:`conditional_qz_given_u`. The normalizer
    is the structured bound itself, so no constant is dropped.
    """
    pr = _problem or _Problem(tensors, obs)
    return log_prior_u(u_w, pr.layout) + collapsed_loglik(u_w, tensors, obs, hp, pr)


def ess_sample(log_likelihood, prior_chol, n_samples, burn_in=0, seed=None, init=None, thin=1):
    """Elliptical slice sampling for a ``N(0, F F')`` prior times ``exp(log_likelihood)``.

    Parameters
    ----------
    log_likelihood : callable
        Maps a state vector to a log-likelihood (any additive constant); non-finite
        values are treated as rejections.
    prior_chol : ndarray
        Square-root factor ``F`` of the prior covariance (lower triangular or not).
    init : ndarray, optional
        Starting state; defaults to the prior mean.

    Returns
    -------
    samples : ndarray, shape (n_samples, d)
    info : dict
        ``n_evals`` (likelihood evaluations) and ``final_loglik``.

    Raises
    ------
    SamplerError
        If the angle bracket shrinks to zero width.
    """
    F = np.atleast_2d(np.asarray(prior_chol, dtype=float))
    d = F.shape[0]
    rng = np.random.default_rng(seed)
    x = np.zeros(d) if init is None else np.array(init, dtype=float).reshape(d)
    cur = log_likelihood(x)
    if not np.isfinite(cur):
        raise ValueError("log-likelihood is not finite at the initial state")
    out = np.empty((n_samples, d))
    n_evals = 1
    total = burn_in + n_samples * thin
    kept = 0
    for it in range(total):
        nu = F @ rng.standard_normal(d)
        threshold = cur + np.log(rng.uniform())
        theta = rng.uniform(0, 2 * np.pi)
        lo, hi = theta - 2 * np.pi, theta
        while True:
            prop = x * np.cos(theta) + nu * np.sin(theta)
            val = log_likelihood(prop)
            n_evals += 1
            if np.isfinite(val) and val > threshold:
                x, cur = prop, val
                break
            if theta < 0:
                lo = theta
            else:
                hi = theta
            if hi - lo < 1e-12:
                raise SamplerError(f"slice bracket collapsed at iteration {it}")
            theta = rng.uniform(lo, hi)
        if it >= burn_in and (it - burn_in) % thin == 0:
            out[kept] = x
            kept += 1
    return out, {"n_evals": n_evals, "final_loglik": float(cur)}


@dataclass
class SMFPosterior:
    """Samples of ``q(u)`` (whitened) with lazily computed ``q(z | u)`` moments."""

    u_samples: np.ndarray
    hp: Hyperparams
    mc_elbo: tuple = (float("nan"), float("inf"))
    seed: int | None = None
    info: dict = field(default_factory=dict)
    _qz: dict = field(default_factory=dict, repr=False)

    @property
    def n_samples(self) -> int:
        return self.u_samples.shape[0]

    def qz(self, i, tensors, obs) -> WhitenedGaussian:
        if i not in self._qz:
            self._qz[i] = conditional_qz_given_u(self.u_samples[i], tensors, obs, self.hp)
        return self._qz[i]


def _fit_gaussian(samples, fallback: WhitenedGaussian):
    """Gaussian fitted to samples; falls back to ``fallback``'s covariance if degenerate."""
    mean = samples.mean(axis=0)
    d = samples.shape[1]
    if samples.shape[0] > d + 1:
        cov = np.cov(samples, rowvar=False).reshape(d, d)
        try:
            la.jittered_cholesky(cov, max_rel_jitter=1e-8)
            return mean, cov
        except la.CholeskyError:
            pass
    return mean, fallback.cov


def _log_weights(draws_v, Lg, m_g, pr, tensors, obs, hp):
    """``log p(u) + l(u) - log g(u)`` in standardized coordinates (the Jacobian cancels)."""
    lay = pr.layout
    d = draws_v.shape[1]
    out = np.empty(draws_v.shape[0])
    for k, v in enumerate(draws_v):
        u_w = la.tri_solve(lay.chol_u, v, trans=True)
        log_p = -0.5 * (v @ v) - 0.5 * d * _LOG_2PI
        r = la.tri_solve(Lg, v - m_g)
        log_g = -0.5 * (r @ r) - la.chol_logdet(Lg) / 2 - 0.5 * d * _LOG_2PI
        out[k] = log_p + collapsed_loglik(u_w, tensors, obs, hp, pr) - log_g
    return out


def smf_elbo_estimate(posterior: SMFPosterior, tensors: MomentTensors, obs: Observations, n_draws=1000,
                      seed=None, fallback: WhitenedGaussian | None = None, n_pilot=None):
    """Monte-Carlo estimate of the structured bound and its standard error.

    For any proposal ``g``, ``E_g[log p(u) + l(u) - log g(u)]`` is a lower
    bound on ``log Z``. Candidate proposals are a Gaussian fitted to the chain,
    ``fallback`` (normally the mean-field ``q(u)``, else the prior) and the
    fitted mean with the ``fallback`` covariance; ``n_pilot`` draws pick the
    best one and ``n_draws`` fresh draws estimate its bound.

    Returns
    -------
    (mean, standard_error, log_mean_exp)
        ``log_mean_exp`` is the importance-sampling estimate of ``log Z``
        from the same draws. A single draw gives an infinite standard error.
    """
    pr = _Problem(tensors, obs)
    lay = pr.layout
    hp = posterior.hp
    if fallback is None:
        fallback = WhitenedGaussian.prior(lay, "u")
    samples_v = posterior.u_samples @ lay.chol_u  # rows L' u_w
    fb_m, fb_S = fallback.standardized(lay.chol_u)
    fit_m, fit_S = _fit_gaussian(samples_v, WhitenedGaussian(fb_m, fb_S))
    candidates = [(fb_m, fb_S), (fit_m, fit_S), (fit_m, fb_S)]
    rng = np.random.default_rng(seed)

    def draw(m, S, k):
        Lg, _ = la.jittered_cholesky(la.sym(S))
        v = m + rng.standard_normal((k, m.size)) @ Lg.T
        lw = _log_weights(v, Lg, m, pr, tensors, obs, hp)
        return lw[np.isfinite(lw)] if np.any(np.isfinite(lw)) else np.array([-np.inf])

    n_pilot = max(2, n_draws // 4) if n_pilot is None else n_pilot
    scores = [np.mean(draw(m, S, n_pilot)) for m, S in candidates]
    m, S = candidates[int(np.argmax(scores))]
    lw = draw(m, S, n_draws)
    if not np.all(np.isfinite(lw)):
        return float("-inf"), float("inf"), float("-inf")
    se = float(np.std(lw, ddof=1) / np.sqrt(lw.size)) if lw.size >= 2 else float("inf")
    return float(np.mean(lw)), se, float(logsumexp(lw) - np.log(lw.size))


def run_smf(mf_state: MFState, tensors: MomentTensors, obs: Observations, n_samples=2000, burn_in=500,
            thin=1, seed=0, n_draws=1000) -> SMFPosterior:
    """Sample ``q(u)`` starting from the mean-field mean and estimate the bound."""
    pr = _Problem(tensors, obs)
    lay = pr.layout
    hp = mf_state.hp

    def loglik_v(v):
        return collapsed_loglik(la.tri_solve(lay.chol_u, v, trans=True), tensors, obs, hp, pr)

    init_v = lay.chol_u.T @ mf_state.q_u.mean
    ss = np.random.SeedSequence(seed)
    chain_seed, est_seed = ss.spawn(2)
    samples_v, info = ess_sample(loglik_v, np.eye(lay.n_u), n_samples, burn_in, chain_seed, init_v, thin)
    u_samples = la.tri_solve(lay.chol_u, samples_v.T, trans=True).T
    post = SMFPosterior(u_samples, hp, seed=seed, info=info)
    value, se, lme = smf_elbo_estimate(post, tensors, obs, n_draws, est_seed, mf_state.q_u)
    post.mc_elbo = (value, se)
    post.info["log_mean_exp"] = lme
    return post


__all__ = [
    "SMFPosterior",
    "SamplerError",
    "collapsed_loglik",
    "conditional_qz_given_u",
    "ess_sample",
    "log_prior_u",
    "log_qu_unnorm",
    "run_smf",
    "smf_elbo_estimate",
]
