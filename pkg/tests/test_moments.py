import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cgpcm.kernels import Hyperparams
from cgpcm.moments import (
    TensorCache,
    WhitenedGaussian,
    assemble_cross_tensors,
    assemble_tensors,
    mean_f,
    var_f,
)
from cgpcm.prior import InducingLayout
from oracles import (
    ConditionalSimulator,
    moment_deviations,
    quadrature_tensors,
    random_instance,
    toy_moment_instance,
)


def whitened_draws(layout, rng):
    u_w = np.linalg.solve(layout.chol_u.T, rng.standard_normal(layout.n_u))
    z_w = np.linalg.solve(layout.chol_z.T, rng.standard_normal(layout.n_z))
    return u_w, z_w


def test_causal_a_value():
    hp = Hyperparams(1.0, 5.0, 1.0, mode="causal")
    lay = InducingLayout.build([0.0, 1.0], [0.0, 1.0], hp)
    T = assemble_tensors([0.0], lay, hp)
    assert T.a == pytest.approx(0.5 * np.sqrt(np.pi / 2), rel=1e-14)


def test_acausal_cross_a_without_filter_length_scale():
    hp = Hyperparams(1.0, 1e-14, 1.0, mode="acausal")
    lay = InducingLayout.build([0.0, 1.0], [0.0, 1.0], hp)
    t = np.array([-1.0, 0.3, 2.0])
    C = assemble_cross_tensors(t, t, lay, hp)
    lag = t[None, :] - t[:, None]
    np.testing.assert_allclose(C.a, np.sqrt(np.pi / 2) * np.exp(-(lag**2) / 2), rtol=1e-12)


@pytest.mark.parametrize("mode", ["causal", "acausal"])
def test_tensors_match_quadrature(mode):
    rng = np.random.default_rng(11)
    hp, lay, times = random_instance(rng, mode, n=5, n_u=4, n_z=4)
    T = assemble_tensors(times, lay, hp)
    Q = quadrature_tensors(times, lay, hp)
    for name, ref in Q.items():
        np.testing.assert_allclose(getattr(T, name), ref, rtol=1e-8, atol=0, err_msg=name)


@pytest.mark.parametrize("mode", ["causal", "acausal"])
def test_tensor_invariants(mode):
    rng = np.random.default_rng(12)
    hp, lay, times = random_instance(rng, mode, n=6, n_u=5, n_z=5)
    T = assemble_tensors(times, lay, hp)
    assert T.a >= 0
    for M in (T.Ah, *T.Ax):
        np.testing.assert_array_equal(M, M.T)
        assert np.linalg.eigvalsh(M).min() >= -1e-10 * np.abs(M).max()
    for M in (*T.Bh, *T.Bx):
        assert np.linalg.eigvalsh(0.5 * (M + M.T)).min() >= -1e-8
    assert np.all(T.b >= -1e-8)
    np.testing.assert_allclose(T.Bh_sum, T.Bh.sum(axis=0), rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(T.Bx_sum, T.Bx.sum(axis=0), rtol=1e-10, atol=1e-12)


@pytest.mark.parametrize("mode", ["causal", "acausal"])
def test_tensors_are_shift_invariant(mode):
    rng = np.random.default_rng(13)
    hp, lay, times = random_instance(rng, mode)
    shifted = InducingLayout.build(lay.t_u, lay.t_z + 5.0, hp)
    T = assemble_tensors(times, lay, hp)
    S = assemble_tensors(times + 5.0, shifted, hp)
    for name in ("Ahx", "Ax", "b"):
        np.testing.assert_allclose(getattr(S, name), getattr(T, name), rtol=1e-9, atol=1e-13)
    u_w, z_w = whitened_draws(lay, rng)
    assert var_f(1, u_w, z_w, S) == pytest.approx(var_f(1, u_w, z_w, T), rel=1e-8)


def test_cross_tensors_reduce_to_diagonal():
    rng = np.random.default_rng(14)
    for mode in ("causal", "acausal"):
        hp, lay, times = random_instance(rng, mode)
        T = assemble_tensors(times, lay, hp)
        C = assemble_cross_tensors(times, times, lay, hp)
        np.testing.assert_allclose(np.diagonal(C.b()), T.b, rtol=0, atol=1e-10 * T.a)
        np.testing.assert_allclose(np.diagonal(C.Ax, 0, 0, 1).transpose(2, 0, 1), T.Ax, rtol=1e-12, atol=1e-15)
        u_w, z_w = whitened_draws(lay, rng)
        np.testing.assert_allclose(np.diagonal(C.cov_f(u_w, z_w)), var_f(slice(None), u_w, z_w, T), rtol=1e-8)


def test_mean_is_bilinear():
    rng = np.random.default_rng(15)
    hp, lay, times = random_instance(rng, "causal")
    T = assemble_tensors(times, lay, hp)
    u_w, z_w = whitened_draws(lay, rng)
    assert mean_f(0, np.zeros(lay.n_u), z_w, T) == 0.0
    assert mean_f(2, u_w, -z_w, T) == -mean_f(2, u_w, z_w, T)
    assert mean_f(1, u_w, z_w, T, sigma_f=2.0) == pytest.approx(2 * mean_f(1, u_w, z_w, T))
    with pytest.raises(ValueError):
        mean_f(0, u_w[:-1], z_w, T)


def test_variance_at_origin_is_b():
    rng = np.random.default_rng(16)
    hp, lay, times = random_instance(rng, "causal")
    T = assemble_tensors(times, lay, hp)
    v = var_f(slice(None), np.zeros(lay.n_u), np.zeros(lay.n_z), T, sigma_f=1.7)
    np.testing.assert_allclose(v, 1.7**2 * T.b)
    assert np.all(v >= -1e-8)


@pytest.mark.parametrize("mode", ["causal", "acausal"])
def test_moments_match_conditional_simulation(mode):
    hp, lay, times = toy_moment_instance(mode)
    T = assemble_tensors(times, lay, hp)
    sim = ConditionalSimulator(times, lay, hp)
    rng = np.random.default_rng(17)
    for _ in range(3):
        u_w, z_w = whitened_draws(lay, rng)
        F = sim.simulate(u_w, z_w, 100000, rng)
        d = moment_deviations(F, mean_f(slice(None), u_w, z_w, T), var_f(slice(None), u_w, z_w, T))
        assert d.max() < 4


def test_cache_reuses_tensors():
    rng = np.random.default_rng(18)
    hp, lay, times = random_instance(rng, "acausal")
    cache = TensorCache(maxsize=2)
    T1 = cache.get(times, lay, hp)
    assert cache.get(times, lay, hp.with_(sigma_f=3.0, sigma2_noise=0.5)) is T1
    cache.get(times, lay, hp.with_(gamma=hp.gamma * 2))
    assert (cache.hits, cache.misses) == (1, 2)


@given(st.integers(1, 6), st.integers(0, 2**32 - 1))
@settings(max_examples=25, deadline=None)
def test_standardized_round_trip_and_kl(d, seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((d, d))
    L = np.linalg.cholesky(X @ X.T + d * np.eye(d))
    Y = rng.standard_normal((d, d))
    q = WhitenedGaussian(rng.standard_normal(d), Y @ Y.T + 0.5 * np.eye(d))
    m, S = q.standardized(L)
    back = WhitenedGaussian.from_standardized(m, S, L)
    np.testing.assert_allclose(back.mean, q.mean, rtol=1e-9, atol=1e-10)
    np.testing.assert_allclose(back.cov, q.cov, rtol=1e-8, atol=1e-9)
    prior = WhitenedGaussian(np.zeros(d), np.linalg.inv(L @ L.T))
    assert prior.kl_to_prior(L) == pytest.approx(0.0, abs=1e-10)
    assert q.kl_to_prior(L) >= 0


def test_whitened_gaussian_validation():
    with pytest.raises(ValueError):
        WhitenedGaussian(np.zeros(2), np.eye(3))
    with pytest.raises(ValueError):
        WhitenedGaussian(np.zeros(2), np.eye(2), side="x")
