"""Covariance functions of the filter, white-noise and interdomain processes.

The filter prior is a windowed exponentiated quadratic

    k_h(t, t') = exp(-alpha (t^2 + t'^2) - gamma (t - t')^2),

the excitation is white noise, and the interdomain process is white noise
smoothed by ``r(t) = exp(-omega t^2)``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np

#: Exponents below this are flushed to zero instead of producing denormals.
LOG_FLOOR = -745.0


class Mode(str, enum.Enum):
    CAUSAL = "causal"
    ACAUSAL = "acausal"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"mode must be 'causal' or 'acausal', got {value!r}") from None


@dataclass(frozen=True)
class Hyperparams:
    """Model constants.

    Parameters
    ----------
    alpha : float
        Window decay (inverse squared time); sets the temporal extent of the filter.
    gamma : float
        Inverse squared length scale of the filter.
    omega : float
        Inverse squared width of the interdomain smoothing filter.
    sigma_f : float
        Signal scale.
    sigma2_noise : float
        Observation noise variance.
    mode : Mode
        Causal (CGPCM) or acausal (GPCM) convolution.
    """

    alpha: float
    gamma: float
    omega: float
    sigma_f: float = 1.0
    sigma2_noise: float = 0.05
    mode: Mode = Mode.CAUSAL

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode.parse(self.mode))
        for name in ("alpha", "gamma", "omega", "sigma2_noise"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive and finite, got {value!r}")
        if not (np.isfinite(self.sigma_f) and self.sigma_f >= 0):
            raise ValueError(f"sigma_f must be nonnegative, got {self.sigma_f!r}")

    @property
    def causal(self) -> bool:
        return self.mode is Mode.CAUSAL

    def with_(self, **changes) -> "Hyperparams":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return {
            "alpha": float(self.alpha),
            "gamma": float(self.gamma),
            "omega": float(self.omega),
            "sigma_f": float(self.sigma_f),
            "sigma2_noise": float(self.sigma2_noise),
            "mode": self.mode.value,
        }

    @classmethod
    def from_dict(cls, d) -> "Hyperparams":
        return cls(**{k: d[k] for k in ("alpha", "gamma", "omega", "sigma_f", "sigma2_noise", "mode")})


def as_time_grid(points, name="grid") -> np.ndarray:
    """Validate a strictly increasing, finite, nonempty 1-D time grid."""
    t = np.asarray(points, dtype=float).reshape(-1)
    if t.size == 0:
        raise ValueError(f"{name} is empty")
    if not np.all(np.isfinite(t)):
        raise ValueError(f"{name} contains non-finite values")
    if t.size > 1 and np.any(np.diff(t) <= 0):
        raise ValueError(f"{name} must be strictly increasing")
    return t


def safe_exp(x):
    """``exp`` with exponents clamped at :data:`LOG_FLOOR` (result 0 there)."""
    x = np.asarray(x, dtype=float)
    out = np.exp(np.maximum(x, LOG_FLOOR))
    return np.where(x < LOG_FLOOR, 0.0, out)


def k_h(t, t2, hp: Hyperparams):
    """Filter covariance ``exp(-alpha (t^2 + t2^2) - gamma (t - t2)^2)`` (broadcasts)."""
    t = np.asarray(t, dtype=float)
    t2 = np.asarray(t2, dtype=float)
    return safe_exp(-hp.alpha * (t**2 + t2**2) - hp.gamma * (t - t2) ** 2)


def k_s(t, t2, hp: Hyperparams):
    """Covariance of the interdomain process: ``sqrt(pi / (2 omega)) exp(-omega (t - t2)^2 / 2)``."""
    d = np.asarray(t, dtype=float) - np.asarray(t2, dtype=float)
    return np.sqrt(np.pi / (2 * hp.omega)) * safe_exp(-0.5 * hp.omega * d**2)


def k_xs(tau, t, hp: Hyperparams):
    """Cross-covariance between white noise at ``tau`` and the interdomain process at ``t``.

    Equal to ``r(t - tau)``; ``r`` is even so the argument order does not matter.
    """
    d = np.asarray(t, dtype=float) - np.asarray(tau, dtype=float)
    return safe_exp(-hp.omega * d**2)


def gram(kernel, x, y, hp):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return kernel(x[:, None], y[None, :], hp)
