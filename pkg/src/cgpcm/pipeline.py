"""End-to-end fitting, persistence and learning-curve runs shared by the CLI and the tests."""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import _linalg as la
from . import artifact
from .kernels import Hyperparams, Mode
from .mf import HYPERPARAM_NAMES, MFOptions, MFState, Observations, _Problem, elbo, optimize_mf
from .moments import MomentTensors, WhitenedGaussian, assemble_tensors
from .prior import InducingLayout, InitSpec, inducing_locations, init_hyperparams, place_inducing_points
from .smf import SMFPosterior, collapsed_loglik, ess_sample, run_smf, smf_elbo_estimate
from .synthetic import eq_sum_kernel, sample_eq_sum, sample_model

SCHEMES = ("mf", "mf-unsaturated", "smf")


class ConfigError(ValueError):
    """One or more invalid configuration fields; ``problems`` lists them all."""

    def __init__(self, problems):
        super().__init__("invalid configuration: " + "; ".join(problems))
        self.problems = list(problems)


def _from_dict(cls, d, extra_checks):
    names = {f.name for f in fields(cls)}
    problems = [f"unknown field {k!r}" for k in d if k not in names]
    kwargs = {k: v for k, v in d.items() if k in names}
    obj = None
    try:
        obj = cls(**kwargs)
    except (TypeError, ValueError) as err:
        problems.append(str(err))
    if obj is not None:
        problems += extra_checks(obj)
    if problems:
        raise ConfigError(problems)
    return obj


@dataclass(frozen=True)
class FitConfig:
    """Fitting settings; ``None`` for ``tau_w``/``tau_f`` selects span-based defaults."""

    n_u: int = 150
    n_z: int = 101
    mode: str = "causal"
    tau_w: float | None = None
    tau_f: float | None = None
    sigma2_noise: float = 0.05
    scheme: str = "mf"
    optimize_hyperparams: bool | tuple = True
    max_iter: int = 500
    max_time: float | None = None
    smf_samples: int = 2000
    smf_burn_in: int = 500
    smf_draws: int = 1000
    normalize: bool = True
    seed: int = 0

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if isinstance(d.get("optimize_hyperparams"), list):
            d["optimize_hyperparams"] = tuple(d["optimize_hyperparams"])
        return _from_dict(cls, d, lambda c: c.problems())

    def problems(self):
        out = []
        if not isinstance(self.optimize_hyperparams, bool):
            bad = [n for n in self.optimize_hyperparams if n not in HYPERPARAM_NAMES]
            if bad:
                out.append(f"optimize_hyperparams may only name {HYPERPARAM_NAMES}, got {bad}")
        if self.scheme not in SCHEMES:
            out.append(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        try:
            Mode.parse(self.mode)
        except ValueError as err:
            out.append(str(err))
        for name in ("n_u", "n_z"):
            if not int(getattr(self, name)) >= 2:
                out.append(f"{name} must be at least 2")
        for name in ("max_iter", "smf_samples", "smf_draws"):
            if not int(getattr(self, name)) >= 1:
                out.append(f"{name} must be positive")
        if self.smf_burn_in < 0:
            out.append("smf_burn_in must be nonnegative")
        if not self.sigma2_noise > 0:
            out.append("sigma2_noise must be positive")
        if self.max_time is not None and not self.max_time > 0:
            out.append("max_time must be positive")
        return out

    def with_(self, **kw):
        d = asdict(self)
        d.update(kw)
        return FitConfig.from_dict(d)


@dataclass(frozen=True)
class SampleConfig:
    """Synthetic data settings.

    ``kind="model"`` draws from the convolution model with the filter prior
    set by ``tau_w``/``tau_f``; ``kind="eq-sum"`` draws from a GP whose kernel
    is a weighted sum of exponentiated quadratics.
    """

    kind: str = "model"
    mode: str = "causal"
    n: int = 400
    t_start: float = 0.0
    t_end: float = 20.0
    tau_w: float = 1.0
    tau_f: float = 0.25
    noise: float = 0.0
    n_u: int = 150
    oversample: int = 8
    weights: tuple = (0.2, 0.5, 0.3)
    scales: tuple = (0.3, 1.0, 3.0)
    seed: int = 0

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        for key in ("weights", "scales"):
            if key in d and isinstance(d[key], list):
                d[key] = tuple(d[key])
        return _from_dict(cls, d, lambda c: c.problems())

    def problems(self):
        out = []
        if self.kind not in ("model", "eq-sum"):
            out.append(f"kind must be 'model' or 'eq-sum', got {self.kind!r}")
        try:
            Mode.parse(self.mode)
        except ValueError as err:
            out.append(str(err))
        if not int(self.n) >= 2:
            out.append("n must be at least 2")
        if not self.t_end > self.t_start:
            out.append("t_end must exceed t_start")
        if not self.tau_f > 0 or not np.sqrt(2) * self.tau_w > self.tau_f:
            out.append("need sqrt(2) * tau_w > tau_f > 0")
        if not self.noise >= 0:
            out.append("noise must be nonnegative")
        if not int(self.n_u) >= 2:
            out.append("n_u must be at least 2")
        if not int(self.oversample) >= 1:
            out.append("oversample must be positive")
        if len(self.weights) != len(self.scales) or not self.weights:
            out.append("weights and scales must be nonempty and of equal length")
        elif any(not w >= 0 for w in self.weights) or any(not s > 0 for s in self.scales):
            out.append("weights must be nonnegative and scales positive")
        return out

    def with_(self, **kw):
        d = asdict(self)
        d.update(kw)
        return SampleConfig.from_dict(d)


def simulate(cfg: SampleConfig):
    """Return ``(t, y, truth)``; ``truth`` is a JSON-ready description of the generator."""
    t = np.linspace(cfg.t_start, cfg.t_end, int(cfg.n))
    truth = {"config": asdict(cfg), "seed": cfg.seed}
    if cfg.kind == "eq-sum":
        f, y = sample_eq_sum(t, cfg.seed, cfg.noise, cfg.weights, cfg.scales)
        lags = t[: min(t.size, 1 + int(np.ceil(4 * max(cfg.scales) / (t[1] - t[0]))))] - t[0]
        truth["kernel"] = {"lag": lags.tolist(), "value": eq_sum_kernel(lags, cfg.weights, cfg.scales).tolist()}
        return t, y, truth
    spec = InitSpec(cfg.tau_w, cfg.tau_f, (cfg.t_start, cfg.t_end), cfg.n_u, 2, cfg.mode)
    hp = init_hyperparams(spec)
    t_u, _ = inducing_locations(spec)
    smp = sample_model(hp, t, cfg.seed, cfg.noise, cfg.oversample, t_u=t_u, max_lag=4 * np.sqrt(2) * cfg.tau_w)
    stride = int(cfg.oversample)
    truth["hyperparams"] = hp.to_dict()
    truth["filter"] = {
        "t_u": t_u.tolist(),
        "h_u": np.interp(t_u, smp.filter_grid, smp.filter).tolist(),
        "tau": smp.filter_grid[::stride].tolist(),
        "h": smp.filter[::stride].tolist(),
    }
    truth["kernel"] = {"lag": smp.lags[::stride].tolist(), "value": smp.kernel[::stride].tolist()}
    return t, smp.y, truth


@dataclass
class FitResult:
    obs: Observations
    spec: InitSpec
    layout: InducingLayout
    mf: MFState
    smf: SMFPosterior | None = None
    tensors: MomentTensors | None = None
    config: FitConfig = field(default_factory=FitConfig)

    def ensure_tensors(self):
        if self.tensors is None:
            self.tensors = assemble_tensors(self.obs.times, self.layout, self.mf.hp)
        return self.tensors

    @property
    def posterior(self):
        return self.smf if self.smf is not None else self.mf

    @property
    def final_elbo(self) -> float:
        return self.mf.final_elbo


def make_model(obs: Observations, cfg: FitConfig):
    spec = InitSpec.for_span(
        (obs.times[0], obs.times[-1]), cfg.n_u, cfg.n_z, Mode.parse(cfg.mode),
        tau_w=cfg.tau_w, tau_f=cfg.tau_f, sigma2_noise=cfg.sigma2_noise,
    )
    hp = init_hyperparams(spec)
    return spec, hp, place_inducing_points(spec, hp)


def _mf_options(cfg: FitConfig, scheme=None):
    scheme = scheme or cfg.scheme
    return MFOptions(
        scheme="unsaturated" if scheme == "mf-unsaturated" else "saturated",
        optimize_hyperparams=cfg.optimize_hyperparams,
        max_iter=cfg.max_iter,
        max_time=cfg.max_time,
        seed=cfg.seed,
    )


def fit(times, values, cfg: FitConfig | None = None, tensors=None, n_workers=1) -> FitResult:
    """Initialize, fit ``q(u) q(z)`` and, for the ``smf`` scheme, refine with sampling."""
    cfg = cfg or FitConfig()
    obs = Observations.from_raw(times, values, cfg.normalize)
    spec, hp, layout = make_model(obs, cfg)
    if tensors is None:
        tensors = assemble_tensors(obs.times, layout, hp, n_workers=n_workers)
    state = optimize_mf(obs, layout, hp, _mf_options(cfg), tensors=tensors)
    post = None
    if cfg.scheme == "smf":
        post = run_smf(state, tensors, obs, cfg.smf_samples, cfg.smf_burn_in, seed=cfg.seed, n_draws=cfg.smf_draws)
    return FitResult(obs, spec, layout, state, post, tensors, cfg)


def save_fit(result: FitResult, directory) -> str:
    """Write the fit as an artifact; wall-clock traces go to ``trace.csv`` outside the hashed content."""
    s = result.mf
    meta = {
        "format": "cgpcm-artifact/1",
        "config": asdict(result.config),
        "hyperparams": s.hp.to_dict(),
        "init_spec": {
            "tau_w": result.spec.tau_w,
            "tau_f": result.spec.tau_f,
            "data_span": list(result.spec.data_span),
            "n_u": result.spec.n_u,
            "n_z": result.spec.n_z,
            "mode": result.spec.mode.value,
            "sigma2_noise": result.spec.sigma2_noise,
        },
        "normalization": {"scale": result.obs.scale, "offset": result.obs.offset},
        "final_elbo": float(s.final_elbo),
        "converged": bool(s.converged),
        "message": s.message,
        "seed": result.config.seed,
    }
    arrays = {
        "t": result.obs.times,
        "e": result.obs.values,
        "t_u": result.layout.t_u,
        "t_z": result.layout.t_z,
        "q_u_mean": s.q_u.mean,
        "q_u_cov": s.q_u.cov,
        "q_z_mean": s.q_z.mean,
        "q_z_cov": s.q_z.cov,
        "elbo_values": np.array([v for _, v in s.elbo_trace]),
    }
    if result.smf is not None:
        arrays["u_samples"] = result.smf.u_samples
        meta["smf"] = {"mc_elbo": list(result.smf.mc_elbo), "seed": result.smf.seed,
                       "log_mean_exp": result.smf.info.get("log_mean_exp")}
    digest = artifact.save_artifact(directory, meta, arrays)
    tr = np.array(s.elbo_trace).reshape(-1, 2)
    artifact.write_csv(Path(directory) / "trace.csv", {"seconds": tr[:, 0], "elbo": tr[:, 1]})
    return digest


def load_fit(directory) -> FitResult:
    meta, a = artifact.load_artifact(directory)
    cfg = FitConfig.from_dict(meta["config"])
    hp = Hyperparams.from_dict(meta["hyperparams"])
    sp = meta["init_spec"]
    spec = InitSpec(sp["tau_w"], sp["tau_f"], tuple(sp["data_span"]), sp["n_u"], sp["n_z"], sp["mode"], sp["sigma2_noise"])
    # The layout depends only on the initial filter constants, which are never optimized.
    layout = InducingLayout.build(a["t_u"], a["t_z"], init_hyperparams(spec))
    norm = meta["normalization"]
    obs = Observations(a["t"], a["e"], norm["scale"], norm["offset"])
    state = MFState(
        WhitenedGaussian(a["q_u_mean"], a["q_u_cov"], "u"),
        WhitenedGaussian(a["q_z_mean"], a["q_z_cov"], "z"),
        hp,
        [(float("nan"), float(v)) for v in a["elbo_values"]],
        meta["converged"],
        meta["message"],
    )
    post = None
    if "u_samples" in a:
        post = SMFPosterior(a["u_samples"], hp, tuple(meta["smf"]["mc_elbo"]), meta["smf"]["seed"])
    return FitResult(obs, spec, layout, state, post, None, cfg)


def reevaluate_elbo(result: FitResult) -> float:
    return elbo(result.mf, result.ensure_tensors(), result.obs)


def smf_learning_curve(state: MFState, tensors, obs, n_blocks=5, block=200, burn_in=100, n_draws=300, seed=0, t_offset=0.0):
    """``(seconds, estimate, se)`` after each block of sampling from the mean-field start."""
    pr = _Problem(tensors, obs)
    lay = pr.layout
    hp = state.hp

    def loglik_v(v):
        return collapsed_loglik(la.tri_solve(lay.chol_u, v, trans=True), tensors, obs, hp, pr)

    seeds = np.random.SeedSequence(seed).spawn(2 * n_blocks + 1)
    t0 = time.perf_counter()
    x = lay.chol_u.T @ state.q_u.mean
    _, info = ess_sample(loglik_v, np.eye(lay.n_u), 1, burn_in, seeds[0], x)
    chain = []
    out = []
    for b in range(n_blocks):
        samples_v, _ = ess_sample(loglik_v, np.eye(lay.n_u), block, 0, seeds[1 + 2 * b], x)
        x = samples_v[-1]
        chain.append(samples_v)
        U = la.tri_solve(lay.chol_u, np.vstack(chain).T, trans=True).T
        post = SMFPosterior(U, hp)
        value, se, _ = smf_elbo_estimate(post, tensors, obs, n_draws, seeds[2 + 2 * b], state.q_u)
        out.append((t_offset + time.perf_counter() - t0, value, se))
    return out


def learning_curves(times, values, cfg: FitConfig | None = None, smf_blocks=5, smf_block=200, smf_draws=300,
                    n_workers=1):
    """Bound traces for unsaturated MF, saturated MF and the SMF Monte-Carlo estimate.

    Returns ``{scheme: [(seconds, value, se), ...]}``; MF series have ``se = 0``.
    The SMF series starts where the saturated run ended.
    """
    cfg = cfg or FitConfig()
    obs = Observations.from_raw(times, values, cfg.normalize)
    spec, hp, layout = make_model(obs, cfg)
    tensors = assemble_tensors(obs.times, layout, hp, n_workers=n_workers)
    curves = {}
    states = {}
    for scheme in ("mf-unsaturated", "mf"):
        st = optimize_mf(obs, layout, hp, _mf_options(cfg, scheme), tensors=tensors)
        states[scheme] = st
        curves[scheme] = [(t, v, 0.0) for t, v in st.elbo_trace]
    sat = states["mf"]
    t_end = sat.elbo_trace[-1][0] if sat.elbo_trace else 0.0
    curves["smf"] = smf_learning_curve(sat, tensors, obs, smf_blocks, smf_block, min(cfg.smf_burn_in, smf_block),
                                       smf_draws, cfg.seed, t_end)
    return curves, states


__all__ = [
    "ConfigError",
    "FitConfig",
    "FitResult",
    "SCHEMES",
    "SampleConfig",
    "fit",
    "learning_curves",
    "load_fit",
    "make_model",
    "reevaluate_elbo",
    "save_fit",
    "simulate",
    "smf_learning_curve",
]
