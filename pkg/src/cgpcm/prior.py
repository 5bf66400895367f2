"""Initialization, inducing-point layout and prior summaries of the induced kernel."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _linalg as la
from .integrals import gaussian_integral_1d
from .kernels import Hyperparams, Mode, as_time_grid, gram, k_h, k_s

#: Initial observation-noise variance as a fraction of unit signal power.
DEFAULT_NOISE_FRACTION = 0.05


@dataclass(frozen=True)
class InitSpec:
    """User-facing initialization settings.

    ``tau_w`` is the correlation time of the window and ``tau_f`` that of the
    signal; they must satisfy ``sqrt(2) * tau_w > tau_f > 0``.
    """

    tau_w: float
    tau_f: float
    data_span: tuple
    n_u: int
    n_z: int
    mode: Mode = Mode.CAUSAL
    sigma2_noise: float = DEFAULT_NOISE_FRACTION

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode.parse(self.mode))
        lo, hi = map(float, self.data_span)
        object.__setattr__(self, "data_span", (lo, hi))
        problems = self.problems()
        if problems:
            raise ValueError("; ".join(problems))

    def problems(self):
        out = []
        lo, hi = self.data_span
        if not (np.isfinite(lo) and np.isfinite(hi) and hi > lo):
            out.append(f"data_span must be a nondegenerate interval, got {self.data_span}")
        if not self.tau_f > 0:
            out.append(f"tau_f must be positive, got {self.tau_f}")
        if not np.sqrt(2) * self.tau_w > self.tau_f:
            out.append(f"need sqrt(2) * tau_w > tau_f, got tau_w={self.tau_w}, tau_f={self.tau_f}")
        if int(self.n_u) < 2:
            out.append(f"n_u must be at least 2, got {self.n_u}")
        if int(self.n_z) < 2:
            out.append(f"n_z must be at least 2, got {self.n_z}")
        if not self.sigma2_noise > 0:
            out.append(f"sigma2_noise must be positive, got {self.sigma2_noise}")
        return out

    @property
    def span(self) -> float:
        return self.data_span[1] - self.data_span[0]

    @property
    def dt_z(self) -> float:
        return self.span / (self.n_z - 1)

    @classmethod
    def for_span(cls, data_span, n_u, n_z, mode=Mode.CAUSAL, tau_w=None, tau_f=None, **kw):
        """Defaults ``tau_w = 0.1 * span`` and ``tau_f = 0.05 * span``."""
        span = float(data_span[1]) - float(data_span[0])
        return cls(
            tau_w=0.1 * span if tau_w is None else tau_w,
            tau_f=0.05 * span if tau_f is None else tau_f,
            data_span=data_span,
            n_u=n_u,
            n_z=n_z,
            mode=mode,
            **kw,
        )


@dataclass(frozen=True)
class InducingLayout:
    """Inducing locations for the filter (``t_u``) and the interdomain process (``t_z``)."""

    t_u: np.ndarray
    t_z: np.ndarray
    K_u: np.ndarray
    K_z: np.ndarray
    chol_u: np.ndarray
    chol_z: np.ndarray
    jitter_u: float = 0.0
    jitter_z: float = 0.0
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @classmethod
    def build(cls, t_u, t_z, hp: Hyperparams, max_rel_jitter=1e-6, min_rel_jitter=1e-6):
        """Gram matrices and Cholesky factors for the given locations.

        A jitter of at least ``min_rel_jitter * trace / n`` is always added.
        Dense inducing grids otherwise give condition numbers near 1e11, and
        whitened moments then lose several digits to rounding.
        """
        t_u = as_time_grid(t_u, "t_u")
        t_z = as_time_grid(t_z, "t_z")
        K_u = gram(k_h, t_u, t_u, hp)
        K_z = gram(k_s, t_z, t_z, hp)
        try:
            L_u, j_u = la.jittered_cholesky(K_u, max_rel_jitter, min_rel_jitter)
            L_z, j_z = la.jittered_cholesky(K_z, max_rel_jitter, min_rel_jitter)
        except la.CholeskyError as err:
            raise la.CholeskyError(f"ill-conditioned inducing layout: {err}") from err
        K_u = K_u + j_u * np.eye(len(t_u))
        K_z = K_z + j_z * np.eye(len(t_z))
        return cls(t_u, t_z, K_u, K_z, L_u, L_z, j_u, j_z)

    @property
    def n_u(self) -> int:
        return len(self.t_u)

    @property
    def n_z(self) -> int:
        return len(self.t_z)

    @property
    def K_u_inv(self):
        if "K_u_inv" not in self._cache:
            self._cache["K_u_inv"] = la.chol_inv(self.chol_u)
        return self._cache["K_u_inv"]

    @property
    def K_z_inv(self):
        if "K_z_inv" not in self._cache:
            self._cache["K_z_inv"] = la.chol_inv(self.chol_z)
        return self._cache["K_z_inv"]

    @property
    def logdet_K_u(self) -> float:
        return la.chol_logdet(self.chol_u)

    @property
    def logdet_K_z(self) -> float:
        return la.chol_logdet(self.chol_z)


def init_hyperparams(spec: InitSpec) -> Hyperparams:
    """Hyperparameters that give unit prior power and correlation times ``tau_w``, ``tau_f``.

    The causal parameters are derived from the acausal ones so that both models
    have the same power and (approximately) the same correlation time.
    """
    if not np.sqrt(2) * spec.tau_w > spec.tau_f > 0:
        raise ValueError("need sqrt(2) * tau_w > tau_f > 0")
    alpha_ac = np.pi / (4 * spec.tau_w**2)
    gamma_ac = np.pi / (4 * spec.tau_f**2) - alpha_ac / 2
    sigma_f = np.sqrt(np.sqrt(2 * alpha_ac / np.pi))
    if spec.mode is Mode.CAUSAL:
        alpha, gamma = alpha_ac / 4, 3 * alpha_ac / 8 + gamma_ac
    else:
        alpha, gamma = alpha_ac, gamma_ac
    omega = np.pi / (8 * spec.dt_z**2)
    return Hyperparams(alpha, gamma, omega, sigma_f, spec.sigma2_noise, spec.mode)


def inducing_locations(spec: InitSpec):
    """Return ``(t_u, t_z)`` following the evenly spaced placement rule."""
    if spec.mode is Mode.CAUSAL:
        raw = np.linspace(0.0, 6 * spec.tau_w, spec.n_u)
        t_u = raw - 2 * (raw[1] - raw[0])
    else:
        t_u = np.linspace(-3 * spec.tau_w, 3 * spec.tau_w, spec.n_u)
    t_z = np.linspace(spec.data_span[0], spec.data_span[1], spec.n_z)
    return t_u, t_z


def place_inducing_points(spec: InitSpec, hp: Hyperparams) -> InducingLayout:
    t_u, t_z = inducing_locations(spec)
    return InducingLayout.build(t_u, t_z, hp)


def default_lags(tau_w, n=401):
    """Symmetric lag grid covering the window support."""
    half = 4 * np.sqrt(2) * tau_w
    return np.linspace(-half, half, n)


def prior_power(hp: Hyperparams) -> float:
    """Closed-form prior variance of ``f``."""
    if hp.causal:
        return hp.sigma_f**2 * np.sqrt(np.pi / (8 * hp.alpha))
    return hp.sigma_f**2 * np.sqrt(np.pi / (2 * hp.alpha))


def prior_correlation_time(hp: Hyperparams) -> float:
    """Closed-form correlation time of the prior mean kernel."""
    s = hp.alpha + 2 * hp.gamma
    if hp.causal:
        return np.sqrt(2 / (np.pi * s)) * np.arctan(np.sqrt(s / hp.alpha))
    return np.sqrt(np.pi / (2 * s))


def correlation_time(kernel, lags=None) -> float:
    """Trapezoidal estimate of ``(1 / k(0)) * int_0 k(r) dr``.

    ``kernel`` is sampled on ``lags``, which must start at zero (a unit grid is
    assumed when ``lags`` is omitted).
    """
    k = np.asarray(kernel, dtype=float)
    r = np.arange(k.size, dtype=float) if lags is None else np.asarray(lags, dtype=float)
    if r[0] != 0:
        raise ValueError("lag grid must start at zero")
    if not k[0] > 0:
        raise ValueError("k(0) must be positive")
    return float(np.trapezoid(k, r) / k[0])


def _lag_limits(hp):
    return (0.0, np.inf) if hp.causal else (-np.inf, np.inf)


def filter_autocorrelation_terms(lags, t_u, hp: Hyperparams):
    """Integrals behind the expected kernel at each ``|lag|``.

    Returns ``(base, J)`` with ``base[l] = int k_h(|r_l| + s, s) ds`` and
    ``J[l, i, j] = int k_h(t_u[i], |r_l| + s) k_h(s, t_u[j]) ds``; integration is
    over ``s >= 0`` in causal mode and over the real line otherwise.
    """
    r = np.abs(np.asarray(lags, dtype=float))
    t_u = np.asarray(t_u, dtype=float)
    a, g = hp.alpha, hp.gamma
    lo, hi = _lag_limits(hp)

    base = gaussian_integral_1d(2 * a, -2 * a * r, -(a + g) * r**2, lo, hi)

    ti = t_u[None, :, None]
    tj = t_u[None, None, :]
    rr = r[:, None, None]
    lin = -2 * a * rr + 2 * g * (ti - rr + tj)
    const = -a * (ti**2 + rr**2 + tj**2) - g * ((ti - rr) ** 2 + tj**2)
    J = gaussian_integral_1d(2 * (a + g), lin, const, lo, hi)
    return base, J


def expected_kernel(M, layout: InducingLayout, hp: Hyperparams, lags):
    """``sigma_f^2 (base(r) + tr(M J(r)))`` for a given inducing second-moment correction ``M``.

    ``M`` is ``E[K_u^{-1} u u' K_u^{-1}] - K_u^{-1}``; pass ``K_u^{-1} u u' K_u^{-1} - K_u^{-1}``
    for fixed ``u``.
    """
    base, J = filter_autocorrelation_terms(lags, layout.t_u, hp)
    return hp.sigma_f**2 * (base + np.einsum("ij,lij->l", M, J))


def expected_kernel_given_u(u, layout: InducingLayout, hp: Hyperparams, lags):
    """Bayesian-quadrature estimate ``E[k_{f|h}(r) | u]`` for filter values ``u`` at ``t_u``."""
    u = np.asarray(u, dtype=float).reshape(-1)
    if u.size != layout.n_u:
        raise ValueError(f"expected {layout.n_u} inducing values, got {u.size}")
    w = la.chol_solve(layout.chol_u, u)
    M = np.outer(w, w) - layout.K_u_inv
    return expected_kernel(M, layout, hp, lags)


def filter_given_u(u, layout: InducingLayout, hp: Hyperparams, tau):
    """Conditional mean and variance of the filter ``h(tau)`` given ``u``."""
    u = np.asarray(u, dtype=float).reshape(-1)
    Kx = gram(k_h, tau, layout.t_u, hp)
    mean = Kx @ la.chol_solve(layout.chol_u, u)
    V = la.tri_solve(layout.chol_u, Kx.T)
    var = k_h(np.asarray(tau), np.asarray(tau), hp) - np.sum(V**2, axis=0)
    return mean, np.maximum(var, 0.0)


def sample_prior_kernels(layout: InducingLayout, hp: Hyperparams, lags, n_samples, rng):
    """Kernel curves ``E[k_{f|h} | u]`` for ``u`` drawn from the prior, one per row."""
    rng = np.random.default_rng(rng)
    base, J = filter_autocorrelation_terms(lags, layout.t_u, hp)
    eps = rng.standard_normal((n_samples, layout.n_u))
    W = la.tri_solve(layout.chol_u, eps.T, trans=True).T  # K_u^{-1} u for u ~ N(0, K_u)
    quad = np.einsum("si,lij,sj->sl", W, J, W)
    corr = np.einsum("ij,lij->l", layout.K_u_inv, J)
    return hp.sigma_f**2 * (base[None, :] + quad - corr[None, :])


@dataclass(frozen=True)
class PSDCurve:
    freqs: np.ndarray
    psd: np.ndarray

    @property
    def n_negative(self) -> int:
        """Number of frequencies with negative estimated power (not clamped)."""
        return int(np.sum(self.psd < 0))

    @property
    def min_value(self) -> float:
        return float(np.min(self.psd))


def psd_of_kernel(kernel, lags, freqs=None) -> PSDCurve:
    """Cosine transform ``S(f) = int k(r) cos(2 pi f r) dr`` of a kernel on a uniform lag grid.

    Lag grids that start at zero are treated as one half of a symmetric curve.
    Negative values are kept; see :attr:`PSDCurve.n_negative`.
    """
    k = np.asarray(kernel, dtype=float).reshape(-1)
    r = np.asarray(lags, dtype=float).reshape(-1)
    if k.shape != r.shape or r.size < 2:
        raise ValueError("kernel and lags must have the same length (at least 2)")
    dr = np.diff(r)
    if not np.allclose(dr, dr[0], rtol=1e-6, atol=0):
        raise ValueError("psd_of_kernel requires a uniform lag grid")
    step = dr[0]
    if np.isclose(r[0], 0.0, atol=1e-12 * step):
        weights = np.full(r.size, 2.0)
        weights[0] = 1.0
    else:
        weights = np.ones(r.size)
    if freqs is None:
        n = 2 * r.size if weights[0] == 1.0 else r.size
        freqs = np.arange(n // 2 + 1) / (n * step)
    freqs = np.asarray(freqs, dtype=float)
    psd = step * np.cos(2 * np.pi * np.outer(freqs, r)) @ (weights * k)
    return PSDCurve(freqs, psd)


def roughness_scale(h_curve, tau=None) -> float:
    """``|h(0)|``: the local Wiener-process scale of sample paths.

    ``h_curve`` holds filter samples; when ``tau`` is given the sample at
    ``tau == 0`` is used, otherwise the first sample.
    """
    h = np.asarray(h_curve, dtype=float).reshape(-1)
    if tau is None:
        return float(abs(h[0]))
    tau = np.asarray(tau, dtype=float).reshape(-1)
    idx = np.flatnonzero(np.isclose(tau, 0.0, rtol=0, atol=1e-12))
    if idx.size == 0:
        raise ValueError("filter must be sampled at tau = 0")
    return float(abs(h[idx[0]]))


def slope_at_origin(kernel_fn, eps=1e-4) -> float:
    """Second-order one-sided finite difference of ``k`` at ``r = 0+``.

    Compare against ``-h(0)^2 / 2`` (times ``sigma_f^2``) for the causal model.
    """
    k0, k1, k2 = np.asarray(kernel_fn(np.array([0.0, eps, 2 * eps])), dtype=float)
    return float((-3 * k0 + 4 * k1 - k2) / (2 * eps))
