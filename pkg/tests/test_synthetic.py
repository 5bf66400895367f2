import numpy as np
import pytest

from cgpcm.kernels import Hyperparams
from cgpcm.pipeline import SampleConfig, simulate
from cgpcm.synthetic import (
    ROUGHNESS_THRESHOLD,
    empirical_autocovariance,
    eq_sum_kernel,
    filter_autocorrelation,
    sample_eq_sum,
    sample_model,
    second_difference_ratio,
)


def test_filter_autocorrelation_of_box():
    h = np.ones(10)
    np.testing.assert_allclose(filter_autocorrelation(h, 0.1, 12), 0.1 * np.r_[np.arange(10, 0, -1), 0, 0])


def test_eq_sum_kernel_examples():
    assert eq_sum_kernel(0.0) == pytest.approx(1.0)
    assert eq_sum_kernel(1.0, (1.0,), (1.0,)) == pytest.approx(np.exp(-0.5))


def test_sample_model_is_seeded():
    hp = Hyperparams(0.5, 2.0, 1.0, 1.0, mode="causal")
    t = np.linspace(0, 5, 51)
    a, b = sample_model(hp, t, seed=4), sample_model(hp, t, seed=4)
    np.testing.assert_array_equal(a.y, b.y)
    assert not np.array_equal(a.y, sample_model(hp, t, seed=5).y)
    with pytest.raises(ValueError):
        sample_model(hp, np.r_[0.0, 1.0, 3.0])


def test_causal_filter_draw_vanishes_in_convolution_below_zero():
    hp = Hyperparams(0.5, 2.0, 1.0, 1.0, mode="causal")
    s = sample_model(hp, np.linspace(0, 5, 51), seed=1, t_u=[-2.0])
    assert s.filter_grid[0] <= -2.0
    # the stored kernel uses only the causal half of the filter
    active = s.filter[s.filter_grid >= 0]
    assert s.kernel[0] == pytest.approx(hp.sigma_f**2 * s.step * np.sum(active**2))


@pytest.mark.parametrize("mode", ["causal", "acausal"])
def test_long_sample_autocovariance_matches_stored_kernel(mode):
    t, y, truth = simulate(SampleConfig(mode=mode, n=20000, t_end=2000.0, seed=3, n_u=20))
    lag = np.asarray(truth["kernel"]["lag"])
    k = np.asarray(truth["kernel"]["value"])
    dt = t[1] - t[0]
    keep = lag <= lag[-1] + 1e-12
    emp = empirical_autocovariance(y, int(np.round(lag[-1] / dt)) + 1)
    ref = np.interp(dt * np.arange(emp.size), lag[keep], k[keep])
    cos = emp @ ref / np.linalg.norm(emp) / np.linalg.norm(ref)
    assert cos > 0.9


def test_roughness_statistic_separates_causal_from_acausal():
    cfg = SampleConfig(n=400, t_end=20.0, tau_w=1.0, tau_f=0.25, n_u=20)
    causal = [second_difference_ratio(simulate(cfg.with_(seed=s))[1]) for s in range(20)]
    acausal = [second_difference_ratio(simulate(cfg.with_(mode="acausal", seed=s))[1]) for s in range(20)]
    assert np.mean(np.array(causal) < ROUGHNESS_THRESHOLD) >= 0.85
    assert np.mean(np.array(acausal) > ROUGHNESS_THRESHOLD) >= 0.95
    assert np.median(causal) < np.min(acausal)


def test_second_difference_ratio_reference_values():
    rng = np.random.default_rng(0)
    assert second_difference_ratio(np.cumsum(rng.standard_normal(200000))) == pytest.approx(2.0, rel=0.05)
    assert second_difference_ratio(np.sin(0.01 * np.arange(2000))) == pytest.approx(16.0, rel=1e-3)


def test_eq_sum_draw_has_kernel_power():
    t = np.linspace(0, 50, 400)
    f, y = sample_eq_sum(t, seed=0, noise_var=0.0)
    np.testing.assert_array_equal(f, y)
    powers = [np.mean(sample_eq_sum(t, seed=s, noise_var=0.0)[0] ** 2) for s in range(40)]
    assert np.mean(powers) == pytest.approx(1.0, rel=0.15)


def test_sample_config_lists_every_problem():
    with pytest.raises(ValueError) as err:
        SampleConfig.from_dict({"n": 1, "kind": "other", "noise": -1.0, "bogus": 3})
    msg = str(err.value)
    for word in ("n", "kind", "noise", "bogus"):
        assert word in msg
