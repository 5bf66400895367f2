"""Collapsed mean-field inference with ``q(u, z) = q(u) q(z)``.

All variational distributions live on the whitened vectors ``K_u^{-1} u`` and
``K_z^{-1} z``. Internally the optimizer works in the standardized coordinates
``v = L' w`` (``L L' = K``) where the prior is ``N(0, I)``; this keeps the
updates well conditioned when ``K`` is nearly singular.

Shorthand used below: ``c = sigma_f^2 / sigma^2``, ``D = sum_t e(t) Ahx(t)``,
``P(S) = sum_t Ahx(t) S Ahx(t)'`` and ``Q(S) = sum_t Ahx(t)' S Ahx(t)``.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize

from . import _linalg as la
from .kernels import Hyperparams, as_time_grid
from .moments import MomentTensors, WhitenedGaussian
from .prior import InducingLayout

log = logging.getLogger(__name__)

_LOG_2PI = np.log(2 * np.pi)
#: Lower bound on the noise variance during hyperparameter optimization.
MIN_NOISE = 1e-6
LOG_DIAG_MIN, LOG_DIAG_MAX = -25.0, 5.0
#: Hyperparameters the optimizer may adjust; the rest are fixed by the initialization.
HYPERPARAM_NAMES = ("sigma_f", "sigma2_noise")


@dataclass(frozen=True)
class Observations:
    """Observed series ``e`` at ``times``; ``values = (raw - offset) / scale``."""

    times: np.ndarray
    values: np.ndarray
    scale: float = 1.0
    offset: float = 0.0

    def __post_init__(self):
        times = as_time_grid(self.times, "times")
        values = np.asarray(self.values, dtype=float).reshape(-1)
        if values.shape != times.shape:
            raise ValueError(f"got {times.size} times but {values.size} values")
        if not np.all(np.isfinite(values)):
            raise ValueError("observations contain non-finite values")
        if not (np.isfinite(self.scale) and self.scale > 0):
            raise ValueError("scale must be positive")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_raw(cls, times, raw, normalize=True):
        """Optionally center and rescale ``raw`` to unit power."""
        raw = np.asarray(raw, dtype=float).reshape(-1)
        if not normalize:
            return cls(times, raw)
        offset = float(np.mean(raw))
        scale = float(np.sqrt(np.mean((raw - offset) ** 2)))
        if not scale > 0:
            raise ValueError("cannot normalize a constant series")
        return cls(times, (raw - offset) / scale, scale, offset)

    @property
    def n(self) -> int:
        return self.values.size

    @property
    def sum_sq(self) -> float:
        return float(self.values @ self.values)

    def to_raw(self, mean, var=None):
        """Map normalized predictions back to the original units."""
        out = np.asarray(mean) * self.scale + self.offset
        if var is None:
            return out
        return out, np.asarray(var) * self.scale**2


@dataclass
class MFState:
    """Mean-field posterior plus the hyperparameters it was fitted with."""

    q_u: WhitenedGaussian
    q_z: WhitenedGaussian
    hp: Hyperparams
    elbo_trace: list = field(default_factory=list)
    converged: bool = False
    message: str = ""
    n_iter: int = 0
    grad_norm: float = float("nan")

    @property
    def final_elbo(self) -> float:
        return self.elbo_trace[-1][1] if self.elbo_trace else float("nan")


class _Problem:
    """Data-dependent constants shared by the bound, its updates and gradients."""

    def __init__(self, tensors: MomentTensors, obs: Observations):
        if tensors.n != obs.n or not np.array_equal(tensors.times, obs.times):
            raise ValueError("tensors were assembled for a different time grid")
        self.t = tensors
        self.obs = obs
        self.layout = tensors.layout
        self.D = tensors.weighted_Ahx(obs.values)
        self.n = obs.n
        self.E2 = obs.sum_sq

    def base(self, hp):
        return -0.5 * self.n * (_LOG_2PI + np.log(hp.sigma2_noise)) - self.E2 / (2 * hp.sigma2_noise)

    def lin_quad(self, q_u, q_z):
        """``lin = mu_u' D mu_z`` and ``quad = sum_t E_q[Var + mean^2] / sigma_f^2``."""
        Su, Sz = q_u.second_moment, q_z.second_moment
        lin = q_u.mean @ self.D @ q_z.mean
        PSz = self.t.P(Sz)
        quad = self.t.b_sum + np.sum(self.t.Bh_sum * Su) + np.sum(self.t.Bx_sum * Sz) + np.sum(PSz * Su)
        return lin, quad, PSz


def _standardized_gaussian(precision_v, rhs_v, chol_K, side):
    mean_v, cov_v, _ = la.gaussian_from_precision(precision_v, rhs_v)
    return WhitenedGaussian.from_standardized(mean_v, cov_v, chol_K, side)


def _to_v(M, chol_K):
    """``L^{-1} M L^{-T}``: maps a whitened-space curvature to the standardized space."""
    X = la.tri_solve(chol_K, M)
    return la.sym(la.tri_solve(chol_K, X.T))


def update_qz(state: MFState, tensors: MomentTensors, obs: Observations, _problem=None) -> WhitenedGaussian:
    """Optimal ``q(z)`` given ``q(u)``.

    Precision ``K_z + c (sum_t Bx(t) + Q(<uu'>))`` and
    precision @ mean = ``(sigma_f / sigma^2) D' mu_u``.
    """
    pr = _problem or _Problem(tensors, obs)
    hp = state.hp
    c = hp.sigma_f**2 / hp.sigma2_noise
    Lz = pr.layout.chol_z
    M = tensors.Bx_sum + tensors.Q(state.q_u.second_moment)
    prec_v = np.eye(pr.layout.n_z) + c * _to_v(M, Lz)
    rhs_v = la.tri_solve(Lz, (hp.sigma_f / hp.sigma2_noise) * (pr.D.T @ state.q_u.mean))
    return _standardized_gaussian(prec_v, rhs_v, Lz, "z")


def update_qu(state: MFState, tensors: MomentTensors, obs: Observations, _problem=None) -> WhitenedGaussian:
    """Optimal ``q(u)`` given ``q(z)``; mirror image of :func:`update_qz`."""
    pr = _problem or _Problem(tensors, obs)
    hp = state.hp
    c = hp.sigma_f**2 / hp.sigma2_noise
    Lu = pr.layout.chol_u
    M = tensors.Bh_sum + tensors.P(state.q_z.second_moment)
    prec_v = np.eye(pr.layout.n_u) + c * _to_v(M, Lu)
    rhs_v = la.tri_solve(Lu, (hp.sigma_f / hp.sigma2_noise) * (pr.D @ state.q_z.mean))
    return _standardized_gaussian(prec_v, rhs_v, Lu, "u")


def expected_log_lik(state: MFState, tensors, obs, _problem=None) -> float:
    pr = _problem or _Problem(tensors, obs)
    hp = state.hp
    lin, quad, _ = pr.lin_quad(state.q_u, state.q_z)
    return pr.base(hp) + hp.sigma_f * lin / hp.sigma2_noise - hp.sigma_f**2 * quad / (2 * hp.sigma2_noise)


def elbo(state: MFState, tensors: MomentTensors, obs: Observations, _problem=None) -> float:
    """``E_q[log p(e | f)] - KL(q(u) || p(u)) - KL(q(z) || p(z))``."""
    pr = _problem or _Problem(tensors, obs)
    lay = pr.layout
    return float(
        expected_log_lik(state, tensors, obs, pr)
        - state.q_u.kl_to_prior(lay.chol_u)
        - state.q_z.kl_to_prior(lay.chol_z)
    )


def _saturated_parts(q_u, pr: _Problem, hp):
    """Terms of the bound with ``q(z)`` maximized out; returns ``(value, q_z, Lambda_v chol, extras)``."""
    c = hp.sigma_f**2 / hp.sigma2_noise
    Lz = pr.layout.chol_z
    Su = q_u.second_moment
    M = pr.t.Bx_sum + pr.t.Q(Su)
    prec_v = np.eye(pr.layout.n_z) + c * _to_v(M, Lz)
    Lp = la.chol(prec_v)
    eta_v = la.tri_solve(Lz, (hp.sigma_f / hp.sigma2_noise) * (pr.D.T @ q_u.mean))
    w = la.tri_solve(Lp, eta_v)
    # log|K_z| - log|K_z + c M| = -log|I + c L^{-1} M L^{-T}|
    value = (
        pr.base(hp)
        - 0.5 * c * (pr.t.b_sum + np.sum(pr.t.Bh_sum * Su))
        + 0.5 * (w @ w)
        - 0.5 * la.chol_logdet(Lp)
    )
    return value, Lp, eta_v


def saturated_elbo(q_u: WhitenedGaussian, tensors: MomentTensors, obs: Observations, hp: Hyperparams, _problem=None) -> float:
    """Bound with the optimal ``q(z)`` substituted; equals ``max_{q(z)} elbo``.

    ``-n/2 log 2 pi s2 - |e|^2 / 2 s2 - c/2 (sum_t b(t) + tr(sum_t Bh(t) <uu'>))
    + 1/2 log|K_z| - 1/2 log|Sigma_z^{-1}| + 1/2 mu_z' Sigma_z^{-1} mu_z - KL(q(u) || p(u))``
    """
    pr = _problem or _Problem(tensors, obs)
    value, _, _ = _saturated_parts(q_u, pr, hp)
    return float(value - q_u.kl_to_prior(pr.layout.chol_u))


def _grad_terms(q_u, q_z, pr, hp):
    """Gradients of the (unsaturated) bound wrt ``mu_u``, ``Sigma_u``, ``mu_z``, ``Sigma_z``, log sigma_f, log s2.

    KL contributions are not included; the callers add them in standardized coordinates.
    """
    s2 = hp.sigma2_noise
    c = hp.sigma_f**2 / s2
    lin, quad, PSz = pr.lin_quad(q_u, q_z)
    Mu = pr.t.Bh_sum + PSz
    Mz = pr.t.Bx_sum + pr.t.Q(q_u.second_moment)
    g = {
        "mu_u": (hp.sigma_f / s2) * (pr.D @ q_z.mean) - c * (Mu @ q_u.mean),
        "Sigma_u": -0.5 * c * Mu,
        "mu_z": (hp.sigma_f / s2) * (pr.D.T @ q_u.mean) - c * (Mz @ q_z.mean),
        "Sigma_z": -0.5 * c * Mz,
        "log_sigma_f": (hp.sigma_f * lin - hp.sigma_f**2 * quad) / s2,
        "log_sigma2": -0.5 * pr.n + (pr.E2 - 2 * hp.sigma_f * lin + hp.sigma_f**2 * quad) / (2 * s2),
    }
    return g


def saturated_gradients(q_u: WhitenedGaussian, tensors, obs, hp: Hyperparams, _problem=None) -> dict:
    """Gradients of :func:`saturated_elbo` wrt ``mean``, ``cov`` of ``q(u)`` and log hyperparameters.

    By the envelope theorem they equal the partial derivatives of the full
    bound at the optimal ``q(z)``. ``cov`` derivatives are for a symmetric
    matrix treated as having independent entries.
    """
    pr = _problem or _Problem(tensors, obs)
    state = MFState(q_u, WhitenedGaussian.prior(pr.layout, "z"), hp)
    q_z = update_qz(state, tensors, obs, pr)
    g = _grad_terms(q_u, q_z, pr, hp)
    K_u = pr.layout.K_u
    Sigma_inv = la.chol_inv(la.jittered_cholesky(q_u.cov)[0])
    return {
        "mean": g["mu_u"] - K_u @ q_u.mean,
        "cov": g["Sigma_u"] - 0.5 * K_u + 0.5 * Sigma_inv,
        "log_sigma_f": g["log_sigma_f"],
        "log_sigma2": g["log_sigma2"],
    }


# ---------------------------------------------------------------------------
# Flat parameterization for the quasi-Newton optimizer.


class _Packer:
    """``(m, log-diag Cholesky of S)`` of a standardized Gaussian, plus selected log hyperparameters."""

    def __init__(self, dims, hp_names=()):
        self.dims = dims
        self.hp_names = tuple(hp_names)
        self.tril = [np.tril_indices(d) for d in dims]
        self.sizes = [d + d * (d + 1) // 2 for d in dims]

    def pack(self, gaussians, hp):
        parts = []
        for (m, C), (r, cidx) in zip(gaussians, self.tril):
            C = C.copy()
            C[np.diag_indices_from(C)] = np.log(np.diag(C))
            parts += [m, C[r, cidx]]
        parts.append([np.log(getattr(hp, n)) for n in self.hp_names])
        return np.concatenate([np.ravel(p) for p in parts])

    def unpack(self, x, hp):
        out = []
        pos = 0
        for d, (r, cidx) in zip(self.dims, self.tril):
            m = x[pos : pos + d]
            pos += d
            C = np.zeros((d, d))
            C[r, cidx] = x[pos : pos + d * (d + 1) // 2]
            pos += d * (d + 1) // 2
            C[np.diag_indices(d)] = np.exp(C[np.diag_indices(d)])
            out.append((m, C))
        if self.hp_names:
            hp = hp.with_(**{n: float(np.exp(x[pos + k])) for k, n in enumerate(self.hp_names)})
        return out, hp

    def grad(self, gaussians, grads_v, g_hp):
        """Chain rule from ``(dL/dm, dL/dS)`` to the packed coordinates; ``g_hp`` maps names to log-gradients."""
        parts = []
        for (m, C), (gm, gS), (r, cidx) in zip(gaussians, grads_v, self.tril):
            gC = 2 * la.sym(gS) @ C
            gC[np.diag_indices_from(gC)] *= np.diag(C)
            parts += [gm, gC[r, cidx]]
        parts.append([g_hp[n] for n in self.hp_names])
        return np.concatenate([np.ravel(p) for p in parts])

    def bounds(self):
        """Log-diagonal Cholesky entries stay in ``[LOG_DIAG_MIN, LOG_DIAG_MAX]``.

        Standardized posterior scales never need to exceed the prior's (one) by
        much; unbounded trial steps overflow ``exp`` and derail the line search.
        """
        b = []
        for d, (r, cidx) in zip(self.dims, self.tril):
            b += [(None, None)] * d
            b += [(LOG_DIAG_MIN, LOG_DIAG_MAX) if i == j else (None, None) for i, j in zip(r, cidx)]
        b += [(np.log(MIN_NOISE), None) if n == "sigma2_noise" else (None, None) for n in self.hp_names]
        return b


def _kl_v(m, C):
    d = m.size
    return 0.5 * (np.sum(C * C) + m @ m - d - 2 * np.sum(np.log(np.diag(C))))


def _v_grads(m, C, gw_mean, gw_cov, L):
    """Whitened gradients plus the standardized KL to ``(dL/dm, dL/dS)``."""
    gm = la.tri_solve(L, gw_mean) - m
    S_inv = la.chol_inv(C)
    gS = _to_v(gw_cov, L) - 0.5 * np.eye(m.size) + 0.5 * S_inv
    return gm, gS


def _gaussians_from_v(vs, layout):
    q_u = WhitenedGaussian.from_standardized(vs[0][0], vs[0][1] @ vs[0][1].T, layout.chol_u, "u")
    if len(vs) == 1:
        return q_u, None
    q_z = WhitenedGaussian.from_standardized(vs[1][0], vs[1][1] @ vs[1][1].T, layout.chol_z, "z")
    return q_u, q_z


@dataclass(frozen=True)
class MFOptions:
    """Settings for :func:`optimize_mf`.

    scheme : ``"saturated"`` (quasi-Newton on the bound with ``q(z)`` collapsed),
        ``"unsaturated"`` (quasi-Newton on ``q(u)`` and ``q(z)`` jointly) or
        ``"ca"`` (alternating closed-form updates).
    optimize_hyperparams : ``True`` for ``sigma_f`` and ``sigma2_noise``,
        ``False`` for none, or a tuple naming a subset of the two.
        Quasi-Newton schemes only.
    warmup_iter : iterations with hyperparameters held fixed before they are
        freed. From a random ``q(u)`` the joint problem otherwise tends to
        collapse into the all-noise solution (``sigma_f -> 0``).
    """

    scheme: str = "saturated"
    optimize_hyperparams: bool | tuple = True
    max_iter: int = 500
    max_time: float | None = None
    rel_tol: float = 1e-6
    patience: int = 5
    seed: int | None = 0
    init_scale: float = 0.1
    max_restarts: int = 3
    warmup_iter: int = 50

    def __post_init__(self):
        if self.scheme not in ("saturated", "unsaturated", "ca"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        bad = set(self.hyperparam_names) - set(HYPERPARAM_NAMES)
        if bad:
            raise ValueError(f"cannot optimize {sorted(bad)}; choose from {HYPERPARAM_NAMES}")

    @property
    def hyperparam_names(self) -> tuple:
        h = self.optimize_hyperparams
        if h is True:
            return HYPERPARAM_NAMES
        if h is False or h is None:
            return ()
        return tuple(n for n in HYPERPARAM_NAMES if n in tuple(h)) + tuple(n for n in h if n not in HYPERPARAM_NAMES)


def initial_state(layout: InducingLayout, hp: Hyperparams, seed=0, scale=0.1) -> MFState:
    """Random means ``N(0, scale^2 I)`` in standardized coordinates and prior covariances."""
    rng = np.random.default_rng(seed)
    m_u = scale * rng.standard_normal(layout.n_u)
    m_z = scale * rng.standard_normal(layout.n_z)
    q_u = WhitenedGaussian.from_standardized(m_u, np.eye(layout.n_u), layout.chol_u, "u")
    q_z = WhitenedGaussian.from_standardized(m_z, np.eye(layout.n_z), layout.chol_z, "z")
    return MFState(q_u, q_z, hp)


class _Stop(Exception):
    pass


class _Tracker:
    def __init__(self, opts, t0):
        self.opts = opts
        self.t0 = t0
        self.trace = []
        self.iters = 0
        self.stable = 0
        self.stop_reason = None

    def record(self, value):
        now = time.perf_counter() - self.t0
        if self.trace:
            prev = self.trace[-1][1]
            if abs(value - prev) < self.opts.rel_tol * abs(value):
                self.stable += 1
            else:
                self.stable = 0
        self.trace.append((now, float(value)))
        self.iters += 1
        if self.stable >= self.opts.patience:
            self.stop_reason = "converged"
        elif self.iters >= self.opts.max_iter:
            self.stop_reason = "iteration budget exhausted"
        elif self.opts.max_time is not None and now >= self.opts.max_time:
            self.stop_reason = "time budget exhausted"
        return self.stop_reason


def _run_ca(state, tensors, obs, pr, opts, tracker):
    q_u, q_z, hp = state.q_u, state.q_z, state.hp
    tracker.record(elbo(MFState(q_u, q_z, hp), tensors, obs, pr))
    while True:
        q_u = update_qu(MFState(q_u, q_z, hp), tensors, obs, pr)
        q_z = update_qz(MFState(q_u, q_z, hp), tensors, obs, pr)
        if tracker.record(elbo(MFState(q_u, q_z, hp), tensors, obs, pr)):
            break
    return MFState(q_u, q_z, hp, tracker.trace, tracker.stop_reason == "converged", tracker.stop_reason, tracker.iters)


def _run_quasi_newton(state, tensors, obs, pr, opts, tracker, warn=True):
    lay = pr.layout
    joint = opts.scheme == "unsaturated"
    dims = [lay.n_u, lay.n_z] if joint else [lay.n_u]
    packer = _Packer(dims, opts.hyperparam_names)
    hp0 = state.hp

    def standardized(q, L):
        m, S = q.standardized(L)
        return m, la.jittered_cholesky(S)[0]

    vs = [standardized(state.q_u, lay.chol_u)] + ([standardized(state.q_z, lay.chol_z)] if joint else [])
    x = packer.pack(vs, hp0)
    last = {}

    def fun(x):
        vs, hp = packer.unpack(x, hp0)
        q_u, q_z = _gaussians_from_v(vs, lay)
        try:
            if joint:
                value = expected_log_lik(MFState(q_u, q_z, hp), tensors, obs, pr) - _kl_v(*vs[0]) - _kl_v(*vs[1])
                g = _grad_terms(q_u, q_z, pr, hp)
                grads_v = [
                    _v_grads(vs[0][0], vs[0][1], g["mu_u"], g["Sigma_u"], lay.chol_u),
                    _v_grads(vs[1][0], vs[1][1], g["mu_z"], g["Sigma_z"], lay.chol_z),
                ]
            else:
                value, Lp, eta_v = _saturated_parts(q_u, pr, hp)
                value -= _kl_v(*vs[0])
                mean_v = la.chol_solve(Lp, eta_v)
                cov_v = la.chol_inv(Lp)
                q_z = WhitenedGaussian.from_standardized(mean_v, cov_v, lay.chol_z, "z")
                g = _grad_terms(q_u, q_z, pr, hp)
                grads_v = [_v_grads(vs[0][0], vs[0][1], g["mu_u"], g["Sigma_u"], lay.chol_u)]
        except np.linalg.LinAlgError:
            return np.inf, np.zeros_like(x)
        if not np.isfinite(value):
            return np.inf, np.zeros_like(x)
        grad = packer.grad(vs, grads_v, {"sigma_f": g["log_sigma_f"], "sigma2_noise": g["log_sigma2"]})
        last["x"], last["value"], last["grad"] = x.copy(), value, grad
        return -value, -grad

    def callback(intermediate_result):
        if tracker.record(-intermediate_result.fun):
            raise StopIteration

    v0, g0 = fun(x)
    tracker.record(-v0)
    message = ""
    for attempt in range(opts.max_restarts + 1):
        res = minimize(
            fun,
            x,
            jac=True,
            method="L-BFGS-B",
            bounds=packer.bounds(),
            callback=callback,
            # convergence is judged by the tracker; scipy's own relative-reduction
            # test fires prematurely near the saddle at zero means
            options={"maxiter": max(1, opts.max_iter - tracker.iters), "maxfun": 20 * opts.max_iter,
                     "ftol": 1e-15, "gtol": 1e-10},
        )
        x = res.x
        message = str(res.message)
        if tracker.stop_reason or res.success:
            break
        if "ABNORMAL" in message.upper() or "LINE SEARCH" in message.upper():
            log.info("line search failed (attempt %d); restarting from the last iterate", attempt + 1)
            continue
        break
    vs, hp = packer.unpack(x, hp0)
    q_u, q_z = _gaussians_from_v(vs, lay)
    if not joint:
        q_z = update_qz(MFState(q_u, state.q_z, hp), tensors, obs, pr)
    _, grad = fun(x)
    final = elbo(MFState(q_u, q_z, hp), tensors, obs, pr)
    if tracker.trace and abs(tracker.trace[-1][1] - final) > 0:
        tracker.trace.append((time.perf_counter() - tracker.t0, float(final)))
    converged = tracker.stop_reason == "converged" or bool(res.success)
    reason = tracker.stop_reason or message
    gnorm = float(np.linalg.norm(grad))
    if warn and not converged:
        log.warning("optimizer stopped without converging (%s); gradient norm %.3g", reason, gnorm)
    return MFState(q_u, q_z, hp, tracker.trace, converged, reason, tracker.iters, gnorm)


def optimize_mf(obs: Observations, layout: InducingLayout, hp: Hyperparams, options: MFOptions | None = None,
                tensors: MomentTensors | None = None, init: MFState | None = None) -> MFState:
    """Fit ``q(u) q(z)`` (and optionally ``sigma_f``, ``sigma^2``).

    The returned state carries ``elbo_trace`` as ``(seconds, elbo)`` pairs; in
    the saturated scheme the traced values are the collapsed bound, which
    equals the full bound at the optimal ``q(z)``.
    """
    from .moments import assemble_tensors

    opts = options or MFOptions()
    if tensors is None:
        tensors = assemble_tensors(obs.times, layout, hp)
    pr = _Problem(tensors, obs)
    state = init if init is not None else initial_state(layout, hp, opts.seed, opts.init_scale)
    state = replace(state, hp=state.hp if init is not None else hp)
    t0 = time.perf_counter()
    tracker = _Tracker(opts, t0)
    if opts.scheme == "ca":
        return _run_ca(state, tensors, obs, pr, opts, tracker)
    if opts.hyperparam_names and init is None and opts.warmup_iter > 0:
        warm = replace(opts, optimize_hyperparams=False, max_iter=min(opts.warmup_iter, opts.max_iter))
        first = _Tracker(warm, t0)
        state = _run_quasi_newton(state, tensors, obs, pr, warm, first, warn=False)
        if first.stop_reason == "time budget exhausted" or first.iters >= opts.max_iter:
            return replace(state, converged=False)
        tracker.trace = list(first.trace)
        tracker.iters = first.iters
    return _run_quasi_newton(state, tensors, obs, pr, opts, tracker)


__all__ = [
    "MFOptions",
    "MFState",
    "Observations",
    "elbo",
    "expected_log_lik",
    "initial_state",
    "optimize_mf",
    "saturated_elbo",
    "saturated_gradients",
    "update_qu",
    "update_qz",
]
