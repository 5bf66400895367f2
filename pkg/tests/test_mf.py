import numpy as np
import pytest
from scipy.optimize import minimize

from cgpcm.mf import (
    MFOptions,
    MFState,
    Observations,
    elbo,
    initial_state,
    optimize_mf,
    saturated_elbo,
    saturated_gradients,
    update_qu,
    update_qz,
)
from cgpcm.moments import WhitenedGaussian
from oracles import random_whitened, toy_problem


def _state(layout, hp, rng):
    return MFState(random_whitened(layout, "u", rng), random_whitened(layout, "z", rng), hp)


def _maximize_over(side, state, tensors, obs):
    """Direct maximization of the bound over a Gaussian family for one factor."""
    lay = tensors.layout
    L = lay.chol_u if side == "u" else lay.chol_z
    d = L.shape[0]
    idx = np.tril_indices(d)

    def unpack(x):
        C = np.zeros((d, d))
        C[idx] = x[d:]
        return WhitenedGaussian.from_standardized(x[:d], C @ C.T, L, side)

    def negative(x):
        q = unpack(x)
        s = MFState(q, state.q_z, state.hp) if side == "u" else MFState(state.q_u, q, state.hp)
        return -elbo(s, tensors, obs)

    x0 = np.concatenate([np.zeros(d), np.eye(d)[idx]])
    res = minimize(negative, x0, method="BFGS", options={"gtol": 1e-10, "maxiter": 5000})
    return unpack(res.x)


@pytest.mark.parametrize("side", ["u", "z"])
def test_updates_match_direct_maximization(side):
    obs, lay, hp, T = toy_problem(n=5)
    state = _state(lay, hp, np.random.default_rng(1))
    q = (update_qu if side == "u" else update_qz)(state, T, obs)
    ref = _maximize_over(side, state, T, obs)
    L = lay.chol_u if side == "u" else lay.chol_z
    m, S = q.standardized(L)
    m_ref, S_ref = ref.standardized(L)
    np.testing.assert_allclose(m, m_ref, atol=1e-4)
    np.testing.assert_allclose(S, S_ref, atol=1e-4)


def test_zero_signal_bound_is_gaussian_likelihood():
    obs, lay, hp, T = toy_problem(sigma_f=0.0, sigma2=0.3)
    prior = MFState(WhitenedGaussian.prior(lay, "u"), WhitenedGaussian.prior(lay, "z"), hp)
    e = obs.values
    expected = -obs.n / 2 * np.log(2 * np.pi * 0.3) - e @ e / (2 * 0.3)
    assert elbo(prior, T, obs) == pytest.approx(expected, rel=1e-12)
    assert WhitenedGaussian.prior(lay, "u").kl_to_prior(lay.chol_u) == pytest.approx(0.0, abs=1e-12)


def test_zero_signal_updates_return_priors():
    obs, lay, hp, T = toy_problem(sigma_f=0.0)
    state = _state(lay, hp, np.random.default_rng(2))
    for q, K_inv in ((update_qz(state, T, obs), lay.K_z_inv), (update_qu(state, T, obs), lay.K_u_inv)):
        np.testing.assert_allclose(q.mean, 0.0, atol=1e-12)
        np.testing.assert_allclose(q.cov, K_inv, rtol=1e-8, atol=1e-8 * np.abs(K_inv).max())


def test_zero_signal_saturated_equals_prior_qz_bound():
    obs, lay, hp, T = toy_problem(sigma_f=0.0)
    q_u = random_whitened(lay, "u", np.random.default_rng(3))
    full = elbo(MFState(q_u, WhitenedGaussian.prior(lay, "z"), hp), T, obs)
    assert saturated_elbo(q_u, T, obs, hp) == pytest.approx(full, rel=1e-12)


@pytest.mark.parametrize("mode", ["causal", "acausal"])
def test_saturated_bound_dominates(mode):
    obs, lay, hp, T = toy_problem(mode, n=8, n_u=4, n_z=5)
    rng = np.random.default_rng(4)
    q_u = random_whitened(lay, "u", rng)
    star = saturated_elbo(q_u, T, obs, hp)
    for _ in range(50):
        assert elbo(MFState(q_u, random_whitened(lay, "z", rng), hp), T, obs) <= star + 1e-9 * abs(star)
    q_z = update_qz(MFState(q_u, WhitenedGaussian.prior(lay, "z"), hp), T, obs)
    assert elbo(MFState(q_u, q_z, hp), T, obs) == pytest.approx(star, rel=1e-8)


def test_update_qz_never_decreases_bound():
    obs, lay, hp, T = toy_problem(n=8, n_u=4, n_z=5)
    rng = np.random.default_rng(5)
    for _ in range(20):
        s = _state(lay, hp, rng)
        before = elbo(s, T, obs)
        assert elbo(MFState(s.q_u, update_qz(s, T, obs), hp), T, obs) >= before - 1e-9 * abs(before)


@pytest.mark.parametrize("mode", ["causal", "acausal"])
def test_coordinate_ascent_is_monotone_and_reaches_fixed_point(mode):
    obs, lay, hp, T = toy_problem(mode, n=10, n_u=4, n_z=5)
    st = optimize_mf(obs, lay, hp, MFOptions(scheme="ca", max_iter=2000, rel_tol=1e-14, patience=3), tensors=T)
    values = np.array([v for _, v in st.elbo_trace])
    assert np.all(np.diff(values) >= -1e-9 * np.abs(values[1:]))
    q_u = update_qu(st, T, obs)
    q_z = update_qz(MFState(q_u, st.q_z, hp), T, obs)
    q_u2 = update_qu(MFState(q_u, q_z, hp), T, obs)
    q_z2 = update_qz(MFState(q_u2, q_z, hp), T, obs)
    np.testing.assert_allclose(q_u2.mean, q_u.mean, atol=1e-6 * max(1.0, np.abs(q_u.mean).max()))
    np.testing.assert_allclose(q_z2.mean, q_z.mean, atol=1e-6 * max(1.0, np.abs(q_z.mean).max()))


def test_schemes_agree_on_optimum():
    obs, lay, hp, T = toy_problem(n=10, n_u=4, n_z=5)
    opts = dict(optimize_hyperparams=False, max_iter=3000)
    ca = optimize_mf(obs, lay, hp, MFOptions(scheme="ca", rel_tol=1e-14, patience=3, max_iter=3000), tensors=T)
    sat = optimize_mf(obs, lay, hp, MFOptions(scheme="saturated", rel_tol=1e-12, **opts), tensors=T)
    uns = optimize_mf(obs, lay, hp, MFOptions(scheme="unsaturated", rel_tol=1e-12, **opts), tensors=T)
    assert saturated_elbo(sat.q_u, T, obs, hp) == pytest.approx(ca.final_elbo, abs=1e-6)
    assert sat.final_elbo == pytest.approx(ca.final_elbo, abs=1e-3)
    assert uns.final_elbo == pytest.approx(ca.final_elbo, abs=1e-3)


def test_saturated_gradients_match_finite_differences():
    obs, lay, hp, T = toy_problem(n=8, n_u=4, n_z=5)
    rng = np.random.default_rng(6)
    q_u = random_whitened(lay, "u", rng)
    g = saturated_gradients(q_u, T, obs, hp)
    f = lambda q, h=hp: saturated_elbo(q, T, obs, h)
    scale = np.abs(q_u.mean).max()
    d = rng.standard_normal(lay.n_u) * scale
    eps = 1e-6
    num = (f(WhitenedGaussian(q_u.mean + eps * d, q_u.cov)) - f(WhitenedGaussian(q_u.mean - eps * d, q_u.cov))) / (2 * eps)
    assert g["mean"] @ d == pytest.approx(num, rel=1e-5)
    E = rng.standard_normal((lay.n_u, lay.n_u))
    E = (E + E.T) * np.abs(q_u.cov).max()
    num = (f(WhitenedGaussian(q_u.mean, q_u.cov + eps * E)) - f(WhitenedGaussian(q_u.mean, q_u.cov - eps * E))) / (2 * eps)
    assert np.sum(g["cov"] * E) == pytest.approx(num, rel=1e-5)
    for key, name in (("log_sigma_f", "sigma_f"), ("log_sigma2", "sigma2_noise")):
        up = f(q_u, hp.with_(**{name: getattr(hp, name) * np.exp(eps)}))
        down = f(q_u, hp.with_(**{name: getattr(hp, name) * np.exp(-eps)}))
        assert g[key] == pytest.approx((up - down) / (2 * eps), rel=1e-5)


def test_hyperparameter_optimization_improves_bound():
    obs, lay, hp, T = toy_problem(n=20, n_u=5, n_z=8)
    fixed = optimize_mf(obs, lay, hp, MFOptions(optimize_hyperparams=False), tensors=T)
    free = optimize_mf(obs, lay, hp, MFOptions(), tensors=T)
    assert free.final_elbo >= fixed.final_elbo - 1e-6
    assert free.hp.sigma_f > 1e-2  # no collapse into the all-noise solution
    only_noise = optimize_mf(obs, lay, hp, MFOptions(optimize_hyperparams=("sigma2_noise",)), tensors=T)
    assert only_noise.hp.sigma_f == hp.sigma_f


def test_trace_and_budget():
    obs, lay, hp, T = toy_problem(n=10, n_u=4, n_z=5)
    st = optimize_mf(obs, lay, hp, MFOptions(max_iter=3, warmup_iter=0), tensors=T)
    assert not st.converged and "iteration" in st.message
    times = [t for t, _ in st.elbo_trace]
    assert times == sorted(times)
    assert st.final_elbo == pytest.approx(elbo(st, T, obs), rel=1e-12)


def test_options_validation():
    with pytest.raises(ValueError):
        MFOptions(scheme="newton")
    with pytest.raises(ValueError):
        MFOptions(optimize_hyperparams=("alpha",))
    assert MFOptions(optimize_hyperparams=True).hyperparam_names == ("sigma_f", "sigma2_noise")


def test_initial_state_is_seeded():
    _, lay, hp, _ = toy_problem()
    a, b = initial_state(lay, hp, seed=3), initial_state(lay, hp, seed=3)
    np.testing.assert_array_equal(a.q_u.mean, b.q_u.mean)
    np.testing.assert_allclose(a.q_u.cov, lay.K_u_inv)


def test_observations_normalization():
    obs = Observations.from_raw([0.0, 1.0, 2.0, 3.0], [1.0, 3.0, 5.0, 7.0])
    assert np.mean(obs.values**2) == pytest.approx(1.0)
    np.testing.assert_allclose(obs.to_raw(obs.values), [1.0, 3.0, 5.0, 7.0])
    with pytest.raises(ValueError):
        Observations.from_raw([0.0, 1.0], [2.0, 2.0])
    with pytest.raises(ValueError):
        Observations([0.0, 1.0], [np.nan, 1.0])
