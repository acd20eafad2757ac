import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from esme.drivers import (
    CHOLESKY_MAX_POINTS,
    ExpectedSignature,
    SimConfig,
    SimulationError,
    driver_batch,
    empirical_expected_sig,
    expected_sig_time_bm,
    fgn_autocovariance,
    mc_expected_sig_time_fbm,
    mc_expected_sig_words,
    sample_bm_batch,
    sample_fbm,
    sample_fbm_batch,
    simulate_response,
    simulate_responses,
    time_scaled_pair,
)
from esme.picard import VectorField
from esme.signature import SampledPath, chen_concat, entry, path_signature
from esme.words import enumerate_words


def test_time_bm_entries():
    T = Fraction(1, 4)
    es = expected_sig_time_bm(T, 4)
    assert es.value(()) == 1
    assert es.value((1,)) == T
    assert es.value((2,)) == 0
    assert es.value((2, 2)) == T / 2
    assert es.value((1, 1)) == T**2 / 2
    assert es.value((1, 2, 2)) == T**2 / 4
    for w in enumerate_words(2, 0, 4):
        if w.count(2) % 2:
            assert es.value(w) == 0
    with pytest.raises(ValueError):
        es.value((1, 1, 1, 1, 1))


def test_time_bm_symbolic():
    es = expected_sig_time_bm(None, 4, symbol="t")
    assert str(es.value((1, 2, 2))) == "1/4*t^2"
    assert es.horizon == "t"


def test_time_bm_is_tensor_exponential():
    from esme.signature import tensor_exponential

    T = 0.3
    gen = [np.zeros(1), np.array([T, 0.0]), np.array([0, 0, 0, T / 2])]
    ref = tensor_exponential(gen, 2, 5)
    got = expected_sig_time_bm(T, 5).to_signature()
    for a, b in zip(got.levels, ref.levels):
        np.testing.assert_allclose(a, b, rtol=1e-14, atol=1e-16)


@pytest.mark.property
@settings(max_examples=30, deadline=None)
@given(st.integers(1, 200).map(lambda k: Fraction(k, 97)),
       st.integers(1, 200).map(lambda k: Fraction(k, 97)))
def test_time_bm_semigroup(s, t):
    level = 6
    left = expected_sig_time_bm(s, level).to_signature()
    right = expected_sig_time_bm(t, level).to_signature()
    whole = expected_sig_time_bm(s + t, level).to_signature()
    prod = chen_concat(left, right)
    for a, b in zip(prod.levels, whole.levels):
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)


def test_bm_monte_carlo_oracle():
    config = SimConfig(T=0.25, dt=0.005, seed=11)
    drivers = driver_batch(config, 10_000)
    paths = [SampledPath(config.times, d) for d in drivers[:2000]]
    es = empirical_expected_sig(paths, 2, seed=11)
    assert es.provenance["num_paths"] == 2000
    mc = mc_expected_sig_words(drivers, [(2, 2), (1, 2)], 0.25)
    assert abs(mc.value((2, 2)) - 0.125) < 3 * mc.std_errors[(2, 2)]
    assert abs(es.value((2, 2)) - 0.125) < 3 * es.std_errors[(2, 2)]
    with pytest.raises(KeyError):
        mc.value((1, 1))


def test_empirical_single_path_and_mirror_pair():
    t = np.array([0.0, 1.0])
    path = SampledPath(t, [[0.0, 0.0], [0.7, -0.2]])
    es = empirical_expected_sig([path], 3)
    sig = path_signature(path, 3)
    for w in enumerate_words(2, 0, 3):
        assert es.value(w) == pytest.approx(entry(sig, w), rel=1e-15)
    mirror = SampledPath(t, [[0.0, 0.0], [-0.7, 0.2]])
    es2 = empirical_expected_sig([path, mirror], 2)
    assert es2.value((1,)) == 0 and es2.value((2,)) == 0
    assert es2.value((1, 1)) == pytest.approx(0.49 / 2)
    assert es2.value((2, 2)) == pytest.approx(0.04 / 2)
    with pytest.raises(ValueError):
        empirical_expected_sig([], 2)


def test_expected_signature_json_roundtrip():
    es = expected_sig_time_bm(Fraction(1, 4), 3)
    back = ExpectedSignature.from_dict(es.to_dict())
    for w in enumerate_words(2, 0, 3):
        assert back.value(w) == es.value(w)


def test_symmetrized_monte_carlo_zeroes_odd_words():
    config = SimConfig(T=0.25, dt=0.01, seed=1, scheme="davie", hurst=0.4)
    drivers = driver_batch(config, 200)
    es = mc_expected_sig_words(drivers, [(2,), (1, 2), (2, 2)], 0.25, symmetric_letters=(2,))
    assert es.value((2,)) == 0 and es.value((1, 2)) == 0
    assert es.value((2, 2)) > 0
    assert es.provenance["symmetrized_letters"] == [2]


# -- fractional Brownian motion ------------------------------------------------------

def test_fgn_autocovariance_half_is_white():
    gamma = fgn_autocovariance(0.5, 0.01, 5)
    np.testing.assert_allclose(gamma, [0.01, 0, 0, 0, 0], atol=1e-15)


def test_fbm_half_is_brownian():
    config = SimConfig(T=0.1, dt=0.01, seed=2, scheme="davie", hurst=0.5)
    paths = sample_fbm_batch(0.5, config, 10_000)
    inc = np.diff(paths, axis=1)
    var = inc.var(axis=0, ddof=1)
    se = 0.01 * math.sqrt(2 / (inc.shape[0] - 1))
    assert np.all(np.abs(var - 0.01) < 3 * se + 1e-12)
    corr = np.corrcoef(inc[:, 0], inc[:, 1])[0, 1]
    assert abs(corr) < 3 / math.sqrt(inc.shape[0])


@pytest.mark.property
def test_fbm_terminal_variance():
    h, T = 11 / 24, 0.25
    config = SimConfig(T=T, dt=T / 50, seed=3, scheme="davie", hurst=h)
    terminal = sample_fbm_batch(h, config, 10_000)[:, -1]
    sq = terminal**2
    se = sq.std(ddof=1) / math.sqrt(sq.size)
    assert abs(sq.mean() - T ** (2 * h)) < 3 * se


def test_fbm_covariance_formula():
    h = 0.75
    config = SimConfig(T=0.2, dt=0.1, seed=4, scheme="davie", hurst=h)
    paths = sample_fbm_batch(h, config, 10_000)
    prod = paths[:, 1] * paths[:, 2]
    target = 0.5 * (0.1**1.5 + 0.2**1.5 - 0.1**1.5)
    assert abs(prod.mean() - target) < 3 * prod.std(ddof=1) / math.sqrt(prod.size)


def test_fbm_circulant_embedding_long_grid():
    h = 0.3
    steps = 2 * CHOLESKY_MAX_POINTS
    config = SimConfig(T=1.0, dt=1.0 / steps, seed=5, scheme="davie", hurst=h)
    paths = sample_fbm_batch(h, config, 2000)
    sq = paths[:, -1] ** 2
    assert abs(sq.mean() - 1.0) < 3 * sq.std(ddof=1) / math.sqrt(sq.size)
    inc = np.diff(paths, axis=1)
    lag1 = np.mean(inc[:, :-1] * inc[:, 1:])
    assert lag1 == pytest.approx(fgn_autocovariance(h, config.dt, 2)[1], rel=0.1)


def test_sampling_is_deterministic_per_path():
    config = SimConfig(T=0.25, dt=0.01, seed=9, scheme="davie", hurst=0.4)
    a = sample_fbm_batch(0.4, config, 5)
    b = sample_fbm_batch(0.4, config, 3)
    np.testing.assert_array_equal(a[:3], b)
    single = sample_fbm(0.4, config)
    np.testing.assert_array_equal(single.values[:, 0], a[0])
    c = sample_bm_batch(config, 4, seed=1)
    np.testing.assert_array_equal(c, sample_bm_batch(config, 4, seed=1))
    assert not np.array_equal(c, sample_bm_batch(config, 4, seed=2))


def test_fbm_expected_signature_sparse_matches_dense():
    dense = mc_expected_sig_time_fbm(0.4, 0.25, 0.05, 3, 50, seed=1)
    sparse = mc_expected_sig_time_fbm(0.4, 0.25, 0.05, 0, 50, seed=1, words=[(1, 2, 2), (2, 2)])
    assert sparse.value((2, 2)) == pytest.approx(dense.value((2, 2)), rel=1e-12)
    assert sparse.value((1, 2, 2)) == pytest.approx(dense.value((1, 2, 2)), rel=1e-12)


def test_sim_config_validation():
    with pytest.raises(ValueError):
        SimConfig(T=0.1, dt=0.2)
    with pytest.raises(ValueError):
        SimConfig(T=1, dt=0.1, scheme="rk4")
    with pytest.raises(ValueError):
        SimConfig(T=1, dt=0.1, hurst=0.2)
    with pytest.raises(ValueError):
        SimConfig(T=1, dt=0.3).steps


# -- response simulation -----------------------------------------------------------

def test_deterministic_ode_limit(diffusion_field):
    a, T = 1.3, 0.25
    for dt in (0.01, 0.001):
        config = SimConfig(T=T, dt=dt, seed=0)
        drivers = driver_batch(config, 3)
        y = simulate_responses(diffusion_field, {"a": a, "b": 0.0}, [0.0], drivers, config)
        assert np.max(np.abs(y[:, -1, 0] - (1 - math.exp(-a * T)))) < 2 * dt


def test_zero_field_keeps_initial_value(diffusion_field):
    config = SimConfig(T=0.25, dt=0.01, seed=0)
    drivers = driver_batch(config, 2)
    y = simulate_responses(diffusion_field, {"a": 0.0, "b": 0.0}, [0.4], drivers, config)
    np.testing.assert_array_equal(y, 0.4)


def test_scheme_driver_mismatch(diffusion_field):
    bm = SimConfig(T=0.25, dt=0.01)
    path = SampledPath(bm.times, driver_batch(bm, 1)[0])
    theta = {"a": 1, "b": 2}
    with pytest.raises(ValueError):
        simulate_response(diffusion_field, theta, [0], path, SimConfig(0.25, 0.01, scheme="davie"))
    with pytest.raises(ValueError):
        simulate_response(diffusion_field, theta, [0], path, SimConfig(0.25, 0.01, scheme="euler"))
    with pytest.raises(ValueError):
        simulate_response(diffusion_field, theta, [0], path,
                          SimConfig(0.25, 0.01, scheme="milstein", hurst=0.4))
    with pytest.raises(ValueError):
        simulate_response(diffusion_field, {"a": 1}, [0], path, bm)


def test_blow_up_is_reported():
    vf = VectorField.from_strings([["y^3", "0"]], ["y"], [])
    config = SimConfig(T=1.0, dt=0.1)
    with pytest.raises(SimulationError):
        simulate_responses(vf, {}, [10.0], driver_batch(config, 1), config)


@pytest.mark.property
def test_milstein_strong_order(diffusion_field):
    # Self-convergence: successive halvings driven by the same Brownian increments.
    T, fine_steps, paths = 0.25, 2**11, 500
    fine = SimConfig(T=T, dt=T / fine_steps, seed=21)
    W = sample_bm_batch(fine, paths)
    theta = {"a": 1.0, "b": 2.0}
    terminal = {}
    for k in range(4, 12):
        stride = 2 ** (11 - k)
        config = SimConfig(T=T, dt=T / 2**k, seed=21)
        noise = W[:, ::stride]
        drivers = np.stack([np.broadcast_to(config.times, noise.shape), noise], axis=-1)
        terminal[k] = simulate_responses(diffusion_field, theta, [0.0], drivers, config)[:, -1, 0]
    ks = list(range(4, 11))
    errors = [np.mean(np.abs(terminal[k] - terminal[k + 1])) for k in ks]
    slope = -np.polyfit(ks, np.log2(errors), 1)[0]
    assert 0.8 <= slope <= 1.2, slope


def test_time_scaled_pair():
    t = np.linspace(0, 1, 5)
    vals = np.stack([t, t**2], axis=1)
    out = time_scaled_pair(vals, t, 0.5)
    np.testing.assert_allclose(out[:, 2], 0.5 * t)
    np.testing.assert_allclose(out[[0, 2, 4], 3], [0, 0.0625, 0.25])
    with pytest.raises(ValueError):
        time_scaled_pair(vals, t, 1.5)
