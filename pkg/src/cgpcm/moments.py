"""Moments of ``f(t)`` given the whitened inducing vectors.

With ``u_w = K_u^{-1} u`` and ``z_w = K_z^{-1} z``,

    E[f(t)]   = sigma_f u_w' Ahx(t) z_w
    Var[f(t)] = sigma_f^2 (b(t) + u_w' Bh(t) u_w + z_w' Bx(t) z_w)

where the tensors are integrals of products of ``k_h`` and ``r``. At a single
time they only depend on the offsets ``t - t_z`` (the filter lives on the lag
axis ``s = t - tau``), so ``a`` and ``Ah`` are constants and only ``Ax`` and
``Ahx`` vary with ``t``. Causal mode integrates over ``s >= 0``, acausal over
the real line. Tensors are stored without the ``sigma_f`` factor so they are
reusable when ``sigma_f`` or the noise change.
"""

from __future__ import annotations

import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _linalg as la
from .integrals import (
    NumericalAccuracyError,
    full_plane_gaussian_integral,
    gaussian_integral_1d,
    quadrant_gaussian_integral,
)
from .kernels import Hyperparams, Mode, as_time_grid
from .prior import InducingLayout

#: Observation chunk size for the pairwise (causal) ``Ax`` integrals.
_CHUNK_ENTRIES = 400_000


def _s_limits(causal):
    return (0.0, np.inf) if causal else (-np.inf, np.inf)


def _ahx(d, t_u, hp):
    """``Ahx[t, i, j] = int k_h(t_u[i], s) r(d[t, j] - s) ds`` for offsets ``d = t - t_z``."""
    lo, hi = _s_limits(hp.causal)
    ti = t_u[None, :, None]
    dj = d[:, None, :]
    a = hp.alpha + hp.gamma + hp.omega
    b = 2 * hp.gamma * ti + 2 * hp.omega * dj
    c = -(hp.alpha + hp.gamma) * ti**2 - hp.omega * dj**2
    return gaussian_integral_1d(a, b, c, lo, hi)


def _ax(d1, d2, hp):
    """``int int k_h(s, s') r(d1[i] - s) r(d2[j] - s') ds ds'`` for each row of offsets.

    ``d1`` and ``d2`` have shape ``(m, n_z)``; the result has shape ``(m, n_z, n_z)``.
    """
    g = hp.gamma
    diag = hp.alpha + hp.gamma + hp.omega
    A = np.array([[diag, -g], [-g, diag]])
    di = d1[:, :, None]
    dj = d2[:, None, :]
    b = np.stack(np.broadcast_arrays(2 * hp.omega * di, 2 * hp.omega * dj), axis=-1)
    c = -hp.omega * (di**2 + dj**2)
    if hp.causal:
        # Reflect s -> -s so the half-lines become (-inf, 0].
        return quadrant_gaussian_integral(A, -b, c, np.zeros(2))
    return full_plane_gaussian_integral(A, b, c)


def _ah_lag(lag, t_u, hp):
    """``Ah(t, t + lag)[i, j] = int k_h(s, t_u[i]) k_h(s + lag, t_u[j]) ds`` over the valid ``s``."""
    lag = np.asarray(lag, dtype=float)
    a, g = hp.alpha, hp.gamma
    ti = t_u[:, None]
    tj = t_u[None, :]
    L = lag[..., None, None]
    lin = 2 * g * ti - 2 * a * L + 2 * g * (tj - L)
    const = -a * (ti**2 + L**2 + tj**2) - g * (ti**2 + (L - tj) ** 2)
    lo = np.maximum(0.0, -L) if hp.causal else -np.inf
    return gaussian_integral_1d(2 * (a + g), lin, const, lo, np.inf)


def _a_lag(lag, hp):
    """``a(t, t + lag) = int k_h(s, s + lag) ds`` over the valid ``s``."""
    lag = np.asarray(lag, dtype=float)
    a, g = hp.alpha, hp.gamma
    lo = np.maximum(0.0, -lag) if hp.causal else -np.inf
    return gaussian_integral_1d(2 * a, -2 * a * lag, -(a + g) * lag**2, lo, np.inf)


@dataclass(frozen=True, eq=False)
class MomentTensors:
    """Moment tensors at the observation times (diagonal ``t = t'`` only).

    Attributes
    ----------
    times : ndarray, shape (n,)
    a : float
        ``int k_h(s, s) ds``; identical for every time.
    Ah : ndarray, shape (n_u, n_u)
        Identical for every time.
    Ahx : ndarray, shape (n, n_u, n_z)
    Ax : ndarray, shape (n, n_z, n_z)
    b : ndarray, shape (n,)
    Bh_sum, Bx_sum, b_sum
        Sums over observations of ``Bh(t)``, ``Bx(t)`` and ``b(t)``.
    """

    times: np.ndarray
    layout: InducingLayout
    mode: Mode
    a: float
    Ah: np.ndarray
    Ahx: np.ndarray
    Ax: np.ndarray
    b: np.ndarray
    Bh_sum: np.ndarray
    Bx_sum: np.ndarray
    _lazy: dict = field(default_factory=dict, repr=False)

    @property
    def n(self) -> int:
        return len(self.times)

    @property
    def b_sum(self) -> float:
        return float(np.sum(self.b))

    @property
    def Bh(self):
        """``Ah - Ahx(t) K_z^{-1} Ahx(t)'`` for every time, shape ``(n, n_u, n_u)``."""
        if "Bh" not in self._lazy:
            X = self.Ahx @ self.layout.K_z_inv
            self._lazy["Bh"] = self.Ah[None] - X @ np.swapaxes(self.Ahx, 1, 2)
        return self._lazy["Bh"]

    @property
    def Bx(self):
        """``Ax(t) - Ahx(t)' K_u^{-1} Ahx(t)`` for every time, shape ``(n, n_z, n_z)``."""
        if "Bx" not in self._lazy:
            Y = self.layout.K_u_inv @ self.Ahx
            self._lazy["Bx"] = self.Ax - np.swapaxes(self.Ahx, 1, 2) @ Y
        return self._lazy["Bx"]

    def weighted_Ahx(self, weights):
        """``sum_t w[t] Ahx(t)``."""
        w = np.asarray(weights, dtype=float).reshape(-1)
        if w.size != self.n:
            raise ValueError(f"expected {self.n} weights, got {w.size}")
        return np.tensordot(w, self.Ahx, axes=1)

    def P(self, S):
        """``sum_t Ahx(t) S Ahx(t)'`` for an ``n_z x n_z`` matrix ``S``."""
        n, n_u, n_z = self.Ahx.shape
        X = (self.Ahx @ S).transpose(1, 0, 2).reshape(n_u, n * n_z)
        A = self.Ahx.transpose(1, 0, 2).reshape(n_u, n * n_z)
        return X @ A.T

    def Q(self, S):
        """``sum_t Ahx(t)' S Ahx(t)`` for an ``n_u x n_u`` matrix ``S``."""
        n, n_u, n_z = self.Ahx.shape
        Y = (S @ self.Ahx).reshape(n * n_u, n_z)
        return self.Ahx.reshape(n * n_u, n_z).T @ Y

    def stacked(self, u_w):
        """Rows ``Ahx(t)' u_w`` stacked over time, shape ``(n, n_z)``."""
        return np.einsum("i,tij->tj", np.asarray(u_w, dtype=float), self.Ahx)


def _check_dims(u_w, z_w, tensors):
    u_w = np.asarray(u_w, dtype=float).reshape(-1)
    z_w = np.asarray(z_w, dtype=float).reshape(-1)
    n_u, n_z = tensors.Ahx.shape[1:]
    if u_w.size != n_u or z_w.size != n_z:
        raise ValueError(f"expected u_w of size {n_u} and z_w of size {n_z}, got {u_w.size} and {z_w.size}")
    return u_w, z_w


def mean_f(t_index, u_w, z_w, tensors: MomentTensors, sigma_f=1.0):
    """``sigma_f u_w' Ahx(t) z_w`` at the given time index (or indices)."""
    u_w, z_w = _check_dims(u_w, z_w, tensors)
    return sigma_f * np.einsum("i,...ij,j->...", u_w, tensors.Ahx[t_index], z_w)


def var_f(t_index, u_w, z_w, tensors: MomentTensors, sigma_f=1.0, tol=1e-8):
    """``sigma_f^2 (b(t) + u_w' Bh(t) u_w + z_w' Bx(t) z_w)``.

    Raises
    ------
    NumericalAccuracyError
        If the result is below ``-tol`` (relative to ``sigma_f^2 a``).
    """
    u_w, z_w = _check_dims(u_w, z_w, tensors)
    Bh = tensors.Bh[t_index]
    Bx = tensors.Bx[t_index]
    v = tensors.b[t_index] + np.einsum("i,...ij,j->...", u_w, Bh, u_w) + np.einsum("i,...ij,j->...", z_w, Bx, z_w)
    if np.any(v < -tol * max(tensors.a, 1.0)):
        raise NumericalAccuracyError(f"negative conditional variance {np.min(v):.3g}; tensor assembly is inconsistent")
    return sigma_f**2 * v


def _ax_all(d, hp, n_workers):
    n, n_z = d.shape
    chunk = max(1, _CHUNK_ENTRIES // max(1, n_z * n_z))
    starts = list(range(0, n, chunk))

    def work(s):
        try:
            return _ax(d[s : s + chunk], d[s : s + chunk], hp)
        except NumericalAccuracyError as err:
            raise NumericalAccuracyError(f"Ax integrals failed for time indices {s}..{min(n, s + chunk) - 1}: {err}") from err

    if n_workers > 1 and len(starts) > 1:
        with ThreadPoolExecutor(n_workers) as pool:
            parts = list(pool.map(work, starts))
    else:
        parts = [work(s) for s in starts]
    return np.concatenate(parts, axis=0) if parts else np.zeros((0, n_z, n_z))


def assemble_tensors(times, layout: InducingLayout, hp: Hyperparams, n_workers=1) -> MomentTensors:
    """Compute the moment tensors at ``times`` (any finite, strictly increasing grid).

    ``sigma_f`` and the noise variance do not enter; ``n_workers`` threads share
    the pairwise integrals.
    """
    times = as_time_grid(times, "times")
    t_u, t_z = layout.t_u, layout.t_z
    d = times[:, None] - t_z[None, :]
    lo, hi = _s_limits(hp.causal)

    a = float(gaussian_integral_1d(2 * hp.alpha, 0.0, 0.0, lo, hi))
    Ah = la.sym(_ah_lag(0.0, t_u, hp))
    Ahx = _ahx(d, t_u, hp)
    Ax = _ax_all(d, hp, n_workers)
    Ax = 0.5 * (Ax + np.swapaxes(Ax, 1, 2))

    Ku_inv, Kz_inv = layout.K_u_inv, layout.K_z_inv
    n, n_u, n_z = Ahx.shape
    # tr(K_u^{-1} Ahx K_z^{-1} Ahx') = ||L_u^{-1} Ahx L_z^{-T}||_F^2, per time.
    M = la.tri_solve(layout.chol_u, Ahx.transpose(1, 0, 2).reshape(n_u, n * n_z)).reshape(n_u, n, n_z)
    N = la.tri_solve(layout.chol_z, M.transpose(2, 1, 0).reshape(n_z, n * n_u)).reshape(n_z, n, n_u)
    cross = np.sum(N**2, axis=(0, 2))
    b = a - np.sum(Ku_inv * Ah) - np.einsum("ij,tij->t", Kz_inv, Ax) + cross

    tensors = MomentTensors(times, layout, hp.mode, a, Ah, Ahx, Ax, b, None, None)
    Bh_sum = la.sym(n * Ah - tensors.P(Kz_inv))
    Bx_sum = la.sym(np.sum(Ax, axis=0) - tensors.Q(Ku_inv))
    object.__setattr__(tensors, "Bh_sum", Bh_sum)
    object.__setattr__(tensors, "Bx_sum", Bx_sum)
    return tensors


@dataclass(frozen=True, eq=False)
class CrossMomentTensors:
    """Tensors for pairs of times ``(times1[p], times2[q])``.

    ``a``, ``Ah`` and ``Ax`` are indexed ``[p, q, ...]``; ``Ahx1`` and ``Ahx2``
    hold the single-time ``Ahx`` on each grid.
    """

    times1: np.ndarray
    times2: np.ndarray
    layout: InducingLayout
    a: np.ndarray
    Ah: np.ndarray
    Ax: np.ndarray
    Ahx1: np.ndarray
    Ahx2: np.ndarray

    def b(self):
        L = self.layout
        cross = np.einsum("pik,ij,qjl,kl->pq", self.Ahx1, L.K_u_inv, self.Ahx2, L.K_z_inv)
        return (
            self.a
            - np.einsum("ij,pqji->pq", L.K_u_inv, self.Ah)
            - np.einsum("ij,pqji->pq", L.K_z_inv, self.Ax)
            + cross
        )

    def cov_f(self, u_w, z_w, sigma_f=1.0):
        """``Cov[f(t1), f(t2) | u, z]`` for every pair."""
        L = self.layout
        u_w = np.asarray(u_w, dtype=float)
        z_w = np.asarray(z_w, dtype=float)
        g1, g2 = self.Ahx1 @ z_w, self.Ahx2 @ z_w  # (p, n_u)
        h1 = np.einsum("i,pij->pj", u_w, self.Ahx1)
        h2 = np.einsum("i,pij->pj", u_w, self.Ahx2)
        quad_u = np.einsum("i,pqij,j->pq", u_w, self.Ah, u_w) - (h1 @ L.K_z_inv @ h2.T)
        quad_z = np.einsum("i,pqij,j->pq", z_w, self.Ax, z_w) - (g1 @ L.K_u_inv @ g2.T)
        return sigma_f**2 * (self.b() + quad_u + quad_z)


def assemble_cross_tensors(times1, times2, layout: InducingLayout, hp: Hyperparams) -> CrossMomentTensors:
    """Tensors for every pair ``(t1, t2)``; used for predictive covariances.

    ``Ah[p, q, i, j] = int k_h(s, t_u[i]) k_h(s + t2 - t1, t_u[j]) ds`` and
    ``Ax[p, q, i, j] = int int k_h(s, s') r(t1 - s - t_z[i]) r(t2 - s' - t_z[j]) ds ds'``.
    """
    t1 = as_time_grid(times1, "times1")
    t2 = as_time_grid(times2, "times2")
    lag = t2[None, :] - t1[:, None]
    a = _a_lag(lag, hp)
    Ah = _ah_lag(lag, layout.t_u, hp)
    d1 = t1[:, None] - layout.t_z[None, :]
    d2 = t2[:, None] - layout.t_z[None, :]
    p, q, n_z = len(t1), len(t2), layout.n_z
    D1 = np.repeat(d1, q, axis=0)
    D2 = np.tile(d2, (p, 1))
    Ax = _ax(D1, D2, hp).reshape(p, q, n_z, n_z)
    return CrossMomentTensors(t1, t2, layout, a, Ah, Ax, _ahx(d1, layout.t_u, hp), _ahx(d2, layout.t_u, hp))


@dataclass(frozen=True)
class WhitenedGaussian:
    """Gaussian over a whitened inducing vector ``K^{-1} u`` (side ``"u"``) or ``K^{-1} z`` (``"z"``)."""

    mean: np.ndarray
    cov: np.ndarray
    side: str = "u"

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).reshape(-1)
        cov = la.sym(np.asarray(self.cov, dtype=float))
        if cov.shape != (mean.size, mean.size):
            raise ValueError(f"covariance shape {cov.shape} does not match mean size {mean.size}")
        if self.side not in ("u", "z"):
            raise ValueError(f"side must be 'u' or 'z', got {self.side!r}")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.size

    @property
    def second_moment(self):
        return np.outer(self.mean, self.mean) + self.cov

    @property
    def chol(self):
        return la.jittered_cholesky(self.cov)[0]

    @classmethod
    def prior(cls, layout: InducingLayout, side="u"):
        """The prior ``N(0, K^{-1})`` of a whitened inducing vector."""
        K_inv = layout.K_u_inv if side == "u" else layout.K_z_inv
        return cls(np.zeros(K_inv.shape[0]), K_inv, side)

    def standardized(self, chol_K):
        """Mean and covariance of ``L' w`` where ``L L' = K``; the prior becomes ``N(0, I)``."""
        m = chol_K.T @ self.mean
        S = la.sym(chol_K.T @ self.cov @ chol_K)
        return m, S

    @classmethod
    def from_standardized(cls, m, S, chol_K, side="u"):
        mean = la.tri_solve(chol_K, m, trans=True)
        X = la.tri_solve(chol_K, S, trans=True)
        cov = la.tri_solve(chol_K, X.T, trans=True)
        return cls(mean, cov, side)

    def kl_to_prior(self, chol_K):
        """``KL(N(mean, cov) || N(0, K^{-1}))`` given the Cholesky factor of ``K``."""
        d = self.dim
        if d == 0:
            return 0.0
        m, S = self.standardized(chol_K)
        L, _ = la.jittered_cholesky(S)
        return 0.5 * (np.trace(S) + m @ m - d - la.chol_logdet(L))


class TensorCache:
    """Thread-safe memo of :func:`assemble_tensors` keyed by grid, layout and filter constants."""

    def __init__(self, maxsize=8):
        self.maxsize = maxsize
        self._store = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    @staticmethod
    def key(times, layout, hp):
        times = np.ascontiguousarray(times, dtype=float)
        return (
            times.tobytes(),
            np.ascontiguousarray(layout.t_u).tobytes(),
            np.ascontiguousarray(layout.t_z).tobytes(),
            layout.jitter_u,
            layout.jitter_z,
            float(hp.alpha),
            float(hp.gamma),
            float(hp.omega),
            hp.mode.value,
        )

    def get(self, times, layout, hp, n_workers=1) -> MomentTensors:
        k = self.key(times, layout, hp)
        with self._lock:
            hit = self._store.get(k)
            if hit is not None:
                self.hits += 1
                return hit
            self.misses += 1
            tensors = assemble_tensors(times, layout, hp, n_workers)
            if len(self._store) >= self.maxsize:
                self._store.pop(next(iter(self._store)))
            self._store[k] = tensors
            return tensors

    def clear(self):
        with self._lock:
            self._store.clear()


__all__ = [
    "CrossMomentTensors",
    "MomentTensors",
    "TensorCache",
    "WhitenedGaussian",
    "assemble_cross_tensors",
    "assemble_tensors",
    "mean_f",
    "var_f",
]
