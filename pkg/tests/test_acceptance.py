"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -s``. The slow criteria
(2, 8, 9) take several minutes each.
"""

import time

import numpy as np
import pytest

from cgpcm.kernels import Mode
from cgpcm.mf import MFOptions, MFState, elbo, optimize_mf, saturated_elbo, saturated_gradients, update_qz
from cgpcm.moments import WhitenedGaussian, assemble_tensors, mean_f, var_f
from cgpcm.pipeline import FitConfig, SampleConfig, fit, learning_curves, simulate
from cgpcm.predict import predict_kernel, smse
from cgpcm.prior import (
    InitSpec,
    expected_kernel_given_u,
    filter_given_u,
    init_hyperparams,
    place_inducing_points,
    prior_correlation_time,
    prior_power,
    slope_at_origin,
)
from cgpcm.smf import ess_sample, log_qu_unnorm, run_smf
from oracles import (
    ConditionalSimulator,
    log_evidence,
    moment_deviations,
    quadrature_tensors,
    random_instance,
    random_whitened,
    toy_moment_instance,
    toy_problem,
)


@pytest.fixture
def report(capsys):
    def emit(criterion, ok, detail):
        with capsys.disabled():
            print(f"\n[acceptance {criterion}] {'PASS' if ok else 'FAIL'}: {detail}")
        return ok

    return emit


def test_criterion_1_tensors_match_quadrature(report):
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    worst = {"causal": 0.0, "acausal": 0.0}
    for k in range(50):
        mode = "causal" if k % 2 == 0 else "acausal"
        hp, lay, times = random_instance(rng, mode, n=2, n_u=3, n_z=3)
        T = assemble_tensors(times, lay, hp)
        for name, ref in quadrature_tensors(times, lay, hp).items():
            got = np.asarray(getattr(T, name))
            ref = np.asarray(ref)
            rel = np.max(np.abs(got - ref) / np.abs(ref))
            worst[mode] = max(worst[mode], rel)
    secs = time.perf_counter() - t0
    ok = worst["causal"] < 1e-8 and worst["acausal"] < 1e-10 and secs < 120
    assert report(1, ok, f"max rel error causal {worst['causal']:.2e}, acausal {worst['acausal']:.2e}, {secs:.0f} s")


def test_criterion_2_moments_match_simulation(report):
    hp, lay, times = toy_moment_instance("causal")
    T = assemble_tensors(times, lay, hp)
    sim = ConditionalSimulator(times, lay, hp)
    rng = np.random.default_rng(102)
    t0 = time.perf_counter()
    good = 0
    for _ in range(100):
        u_w = np.linalg.solve(lay.chol_u.T, rng.standard_normal(lay.n_u))
        z_w = np.linalg.solve(lay.chol_z.T, rng.standard_normal(lay.n_z))
        F = sim.simulate(u_w, z_w, 100000, rng)
        d = moment_deviations(F, mean_f(slice(None), u_w, z_w, T), var_f(slice(None), u_w, z_w, T))
        good += bool(np.all(d < 3))
    secs = time.perf_counter() - t0
    ok = good >= 95 and secs < 300
    assert report(2, ok, f"{good}/100 vectors within 3 SE on every moment, {secs:.0f} s")


def _init_pairs():
    for tau_w in (0.5, 1.0, 2.0, 5.0):
        for tau_f in (0.02, 0.05, 0.1, 0.2, 0.5, 1.0):
            try:
                specs = [InitSpec(tau_w, tau_f, (0.0, 10.0), 4, 3, m) for m in (Mode.CAUSAL, Mode.ACAUSAL)]
            except ValueError:  # filter time too long for the window
                continue
            yield tuple(init_hyperparams(s) for s in specs)


def test_criterion_3a_power_identity(report):
    worst = max(abs(prior_power(c) / prior_power(a) - 1) for c, a in _init_pairs())
    assert report("3a", worst < 1e-12, f"max relative power mismatch {worst:.1e}")


def test_criterion_3b_correlation_time_identity(report):
    gaps = [
        abs(prior_correlation_time(c) - prior_correlation_time(a)) / prior_correlation_time(a)
        for c, a in _init_pairs()
        if c.gamma > 10 * c.alpha
    ]
    worst = max(gaps)
    assert report("3b", worst < 0.05, f"{len(gaps)} settings with gamma > 10 alpha, max relative gap {worst:.3f}")


def test_criterion_4_roughness(report):
    spec = InitSpec(1.0, 0.5, (0.0, 10.0), 8, 3, Mode.CAUSAL)
    hp = init_hyperparams(spec)
    lay = place_inducing_points(spec, hp)
    i0 = int(np.flatnonzero(np.isclose(lay.t_u, 0.0))[0])
    rng = np.random.default_rng(104)
    pinned, unpinned = [], []
    for _ in range(10):
        u = lay.chol_u @ rng.standard_normal(lay.n_u)
        u[i0] = 0.0
        pinned.append(abs(slope_at_origin(lambda r: expected_kernel_given_u(u, lay, hp, r))))
    for _ in range(10):
        u = lay.chol_u @ rng.standard_normal(lay.n_u)
        u[i0] = rng.choice([-1, 1]) * rng.uniform(0.3, 1.5)
        m0, v0 = filter_given_u(u, lay, hp, [0.0])
        target = -0.5 * hp.sigma_f**2 * (m0[0] ** 2 + v0[0])
        got = slope_at_origin(lambda r: expected_kernel_given_u(u, lay, hp, r))
        unpinned.append(abs(got / target - 1))
    ok = max(pinned) < 1e-3 and max(unpinned) < 0.05
    assert report(4, ok, f"pinned max |g'(0)| {max(pinned):.1e}; unpinned max relative error {max(unpinned):.1e}")


def test_criterion_5_variational_structure(report):
    rng = np.random.default_rng(105)
    worst_drop = 0.0
    for k in range(10):
        hp, lay, times = random_instance(rng, "causal" if k % 2 else "acausal", n=8, n_u=4, n_z=5)
        obs, _, _, _ = toy_problem(n=8, seed=k)
        T = assemble_tensors(obs.times, lay, hp)
        st = optimize_mf(obs, lay, hp, MFOptions(scheme="ca", max_iter=201, rel_tol=0.0), tensors=T)
        v = np.array([e for _, e in st.elbo_trace])
        assert v.size == 201
        worst_drop = max(worst_drop, float(np.max((v[:-1] - v[1:]) / np.abs(v[1:]))))
    monotone = worst_drop <= 1e-9

    obs, lay, hp, T = toy_problem(n=8, n_u=4, n_z=5)
    q_u = random_whitened(lay, "u", rng)
    star = saturated_elbo(q_u, T, obs, hp)
    dominated = all(elbo(MFState(q_u, random_whitened(lay, "z", rng), hp), T, obs) <= star for _ in range(50))
    q_z = update_qz(MFState(q_u, WhitenedGaussian.prior(lay, "z"), hp), T, obs)
    gap = abs(elbo(MFState(q_u, q_z, hp), T, obs) - star) / abs(star)

    obs, lay, hp, T = toy_problem(n=4, n_u=4, n_z=6, t_end=3.0)
    st = optimize_mf(obs, lay, hp, MFOptions(scheme="ca", max_iter=2000, rel_tol=1e-13), tensors=T)
    log_z, se = log_evidence(obs.times, obs.values, hp, 20000, rng=0)
    bound = st.final_elbo <= log_z + 3 * se

    ok = monotone and dominated and gap < 1e-8 and bound
    assert report(5, ok, f"max relative CA drop {worst_drop:.1e}; dominance {dominated}, equality gap {gap:.1e}; "
                         f"ELBO {st.final_elbo:.3f} vs log-evidence {log_z:.3f} +- {se:.3f}")


def test_criterion_6_gradients(report):
    rng = np.random.default_rng(106)
    worst = 0.0
    eps = 1e-6
    for k in range(20):
        obs, lay, hp, T = toy_problem("causal" if k % 2 else "acausal", n=8, n_u=4, n_z=5, seed=k)
        q_u = random_whitened(lay, "u", rng)
        hp = hp.with_(sigma_f=float(rng.uniform(0.5, 2.0)), sigma2_noise=float(rng.uniform(0.05, 0.5)))
        g = saturated_gradients(q_u, T, obs, hp)
        f = lambda m, S, h=hp: saturated_elbo(WhitenedGaussian(m, S), T, obs, h)
        fd_m = np.empty(lay.n_u)
        for i in range(lay.n_u):
            d = np.zeros(lay.n_u)
            d[i] = eps * max(1.0, abs(q_u.mean[i]))
            fd_m[i] = (f(q_u.mean + d, q_u.cov) - f(q_u.mean - d, q_u.cov)) / (2 * d[i])
        fd_c, an_c = [], []
        h = eps * np.abs(q_u.cov).max()
        for i in range(lay.n_u):
            for j in range(i + 1):
                E = np.zeros((lay.n_u, lay.n_u))
                E[i, j] = E[j, i] = h
                fd_c.append((f(q_u.mean, q_u.cov + E) - f(q_u.mean, q_u.cov - E)) / (2 * h))
                an_c.append(g["cov"][i, j] + (g["cov"][j, i] if i != j else 0.0))
        fd_h = []
        for name in ("sigma_f", "sigma2_noise"):
            up = f(q_u.mean, q_u.cov, hp.with_(**{name: getattr(hp, name) * np.exp(eps)}))
            down = f(q_u.mean, q_u.cov, hp.with_(**{name: getattr(hp, name) * np.exp(-eps)}))
            fd_h.append((up - down) / (2 * eps))
        for an, fd in ((g["mean"], fd_m), (np.array(an_c), np.array(fd_c)),
                       (np.array([g["log_sigma_f"], g["log_sigma2"]]), np.array(fd_h))):
            worst = max(worst, np.linalg.norm(an - fd) / np.linalg.norm(fd))
    assert report(6, worst < 1e-4, f"max relative gradient error {worst:.1e} over 20 states")


def _batch_se(x, n_batches=100):
    b = np.array_split(x, n_batches)
    return np.std([c.mean(axis=0) for c in b], axis=0, ddof=1) / np.sqrt(n_batches)


def test_criterion_7_ess(report):
    P = np.array([[1.0, 0.6, 0.2], [0.6, 1.5, -0.3], [0.2, -0.3, 0.8]])
    y, R = np.array([0.8, -0.4, 1.2]), np.diag([0.5, 1.0, 0.3])
    Ri = np.linalg.inv(R)
    cov = np.linalg.inv(np.linalg.inv(P) + Ri)
    mean = cov @ Ri @ y
    s, _ = ess_sample(lambda x: -0.5 * (y - x) @ Ri @ (y - x), np.linalg.cholesky(P), 100000, burn_in=1000, seed=7)
    z_mean = np.abs(s.mean(axis=0) - mean) / _batch_se(s)
    c = s - mean
    prods = np.einsum("ni,nj->nij", c, c).reshape(len(s), -1)
    z_cov = np.abs(prods.mean(axis=0) - cov.reshape(-1)) / _batch_se(prods)
    conj = z_mean.max() < 3 and z_cov.max() < 3

    obs, lay, hp, T = toy_problem(n=12, n_u=2, n_z=4, seed=3)
    mf = optimize_mf(obs, lay, hp, MFOptions(optimize_hyperparams=False), tensors=T)
    post = run_smf(mf, T, obs, n_samples=20000, burn_in=500, seed=2, n_draws=200)
    g = np.linspace(-6, 6, 121)
    V = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1).reshape(-1, 2)
    logp = np.array([log_qu_unnorm(np.linalg.solve(lay.chol_u.T, v), T, obs, hp) for v in V])
    Pg = np.exp(logp - logp.max()).reshape(g.size, g.size)
    Pg /= Pg.sum()
    edges = np.linspace(-6.05, 6.05, 12)
    v = post.u_samples @ lay.chol_u
    H, _, _ = np.histogram2d(v[:, 0], v[:, 1], bins=[edges, edges])
    idx = np.clip(np.digitize(g, edges) - 1, 0, 10)
    Pc = np.zeros((11, 11))
    np.add.at(Pc, (idx[:, None], idx[None, :]), Pg)
    tv = 0.5 * np.abs(H / H.sum() - Pc).sum()
    ok = conj and tv < 0.1
    assert report(7, ok, f"conjugate max |z| mean {z_mean.max():.2f}, cov {z_cov.max():.2f}; grid TV {tv:.3f}")


def test_criterion_8_learning_curves(report):
    t0 = time.perf_counter()
    good = 0
    lines = []
    for seed in range(10):
        t, y, _ = simulate(SampleConfig(kind="eq-sum", n=300, t_end=15.0, noise=0.05, seed=seed))
        cfg = FitConfig(n_u=30, n_z=50, mode="causal", max_iter=2000, max_time=8.0, seed=seed, smf_burn_in=100)
        curves, _ = learning_curves(t, y, cfg, smf_blocks=3, smf_block=200, smf_draws=200)
        uns, sat = curves["mf-unsaturated"][-1][1], curves["mf"][-1][1]
        smf_value, smf_se = curves["smf"][-1][1:]
        ok = sat >= uns and smf_value >= sat - 3 * smf_se
        good += ok
        lines.append(f"seed {seed}: unsat {uns:.2f} sat {sat:.2f} smf {smf_value:.2f}+-{smf_se:.2f}")
    secs = time.perf_counter() - t0
    ok = good >= 8 and secs < 1800
    assert report(8, ok, f"{good}/10 seeds, {secs:.0f} s; " + "; ".join(lines))


def test_criterion_9_causal_vs_acausal(report):
    good = 0
    lines = []
    for seed in range(10):
        t, y, truth = simulate(SampleConfig(n=200, t_end=10.0, tau_w=1.0, tau_f=1.0, noise=0.0, seed=seed, n_u=30))
        lag = np.asarray(truth["kernel"]["lag"])
        k_true = np.asarray(truth["kernel"]["value"])
        out = {}
        for mode in ("causal", "acausal"):
            r = fit(t, y, FitConfig(n_u=30, n_z=50, mode=mode, tau_w=1.0, tau_f=1.0, max_iter=500, seed=seed))
            k = predict_kernel(lag, r.mf, r.layout).mean * r.obs.scale**2
            out[mode] = (r.mf.hp.sigma2_noise, smse(k, k_true))
        ok = out["causal"][0] < 0.5 * out["acausal"][0] and out["causal"][1] < out["acausal"][1]
        good += ok
        lines.append(f"seed {seed}: noise {out['causal'][0]:.4f}/{out['acausal'][0]:.4f} "
                     f"smse {out['causal'][1]:.3f}/{out['acausal'][1]:.3f}")
    assert report(9, good >= 8, f"{good}/10 seeds (causal/acausal); " + "; ".join(lines))
