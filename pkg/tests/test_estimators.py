import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from icesim.errors import DegenerateInputError, ParameterError
from icesim.estimators import (
    EstimateImage,
    background_mean,
    cov_multiplier,
    estimate_cov,
    estimate_optsub,
    estimate_ratio,
    estimate_scov,
    estimate_t0,
    histogram_bins,
    idler_fluctuation,
    normalized_snr,
    optsub_weight,
    scov_multiplier,
    snr,
)


def test_t0_normalizes_to_background():
    n = np.array([[10.0, 20.0], [10.0, 5.0]])
    bg = np.array([[True, False], [True, False]])
    est = estimate_t0(n, bg)
    np.testing.assert_allclose(est.t_hat, [[1.0, 2.0], [1.0, 0.5]])
    assert est.background_mean == 10.0 and not est.flags.any()


def test_background_errors():
    n = np.ones((2, 2))
    with pytest.raises(DegenerateInputError):
        background_mean(n, np.zeros((2, 2), bool))
    with pytest.raises(DegenerateInputError):
        background_mean(np.zeros((2, 2)), np.ones((2, 2), bool))
    with pytest.raises(ParameterError):
        background_mean(n, np.ones((3, 2), bool))
    with pytest.raises(ParameterError):
        estimate_t0(5.0, True)


def test_ratio_flags_zero_idler():
    n_s = np.array([4.0, 6.0, 3.0, 5.0])
    n_i = np.array([2.0, 3.0, 0.0, 3.0])
    bg = np.array([True, True, False, False])
    est = estimate_ratio(n_s, n_i, bg)
    # <N_i> = 2, <N_s^b> = 5
    np.testing.assert_allclose(est.t_hat[[0, 1, 3]], [4 / 2 * 2 / 5, 6 / 3 * 2 / 5, 5 / 3 * 2 / 5])
    assert math.isnan(est.t_hat[2])
    assert list(est.flags) == [False, False, True, False]
    assert est.valid().size == 3


def test_optsub_weight_and_estimate():
    assert optsub_weight(0.5, 10.0, 10.0) == pytest.approx(0.125)
    assert optsub_weight(0.7, 0.0, 0.0) == 0.0
    with pytest.raises(ParameterError):
        optsub_weight(1.2, 1.0, 0.0)
    n_s = np.array([10.0, 12.0, 8.0, 6.0])
    n_i = np.array([20.0, 22.0, 18.0, 20.0])
    bg = np.array([True, True, True, False])
    est = estimate_optsub(n_s, n_i, 1.0, 0.5, 10.0, 0.0, bg)
    nb = 10.0
    expected = n_s / nb - 0.5 * (n_i - 20.0) / nb
    np.testing.assert_allclose(est.t_hat, expected)


def test_idler_fluctuation_zero_mean():
    x = np.arange(12.0).reshape(3, 4)
    assert idler_fluctuation(x).mean() == pytest.approx(0.0)


def test_cov_multiplier_matches_polyfit():
    rng = np.random.default_rng(0)
    ni = rng.poisson(30, (50, 3, 4)).astype(float)
    n = 0.4 * ni + rng.normal(0, 1, ni.shape)
    mult = cov_multiplier(n, ni)
    for iy in range(3):
        for ix in range(4):
            slope = np.polyfit(ni[:, iy, ix], n[:, iy, ix], 1)[0]
            assert mult.k_star[iy, ix] == pytest.approx(slope, rel=1e-10)
    assert not mult.flags.any()


def test_cov_multiplier_zero_variance_flagged():
    ni = np.ones((5, 2))
    ni[:, 1] = [1, 2, 3, 4, 5]
    n = ni * 2
    mult = cov_multiplier(n, ni)
    assert mult.k_star[0] == 0.0 and mult.flags[0]
    assert mult.k_star[1] == pytest.approx(2.0)
    with pytest.raises(ParameterError):
        cov_multiplier(n[:1], ni[:1])


def test_estimate_cov_combine_modes():
    rng = np.random.default_rng(1)
    ni = rng.poisson(40, (20, 4, 4)).astype(float)
    n = 0.5 * ni + rng.poisson(5, ni.shape)
    bg = np.ones((4, 4), bool)
    every = estimate_cov(n, ni, bg, combine="none")
    mean = estimate_cov(n, ni, bg, combine="mean")
    last = estimate_cov(n, ni, bg, combine="last")
    assert every.t_hat.shape == (20, 4, 4)
    np.testing.assert_allclose(mean.t_hat, every.t_hat.mean(axis=0))
    np.testing.assert_allclose(last.t_hat, every.t_hat[-1])
    # per-frame oracle
    k = cov_multiplier(n, ni).k_star
    f = 7
    oracle = n[f] / n[f].mean() - k * (ni[f] - ni[f].mean()) / n[f].mean()
    np.testing.assert_allclose(every.t_hat[f], oracle)
    with pytest.raises(ParameterError):
        estimate_cov(n, ni, bg, combine="median")


def test_cov_removes_shared_fluctuation():
    rng = np.random.default_rng(2)
    ni = rng.poisson(200, (400, 10)).astype(float)
    n = 0.5 * ni
    est = estimate_cov(n, ni, np.ones(10, bool), combine="none")
    # perfectly correlated: subtraction leaves a constant
    assert np.std(est.t_hat[:, 0]) < 1e-12


def test_histogram_bins_equal_width():
    n = np.array([0.0, 1.0, 2.5, 5.0, 10.0])
    np.testing.assert_array_equal(histogram_bins(n, 4), [0, 0, 1, 2, 3])
    np.testing.assert_array_equal(histogram_bins(np.full(3, 2.0), 4), [0, 0, 0])
    with pytest.raises(ParameterError):
        histogram_bins(n, 0)


def test_scov_multiplier_matches_loop():
    rng = np.random.default_rng(3)
    ni = rng.poisson(50, (30, 30)).astype(float)
    n = np.where(rng.random((30, 30)) < 0.5, 0.3, 0.9) * ni + rng.normal(0, 2, ni.shape)
    bins = 8
    mult = scov_multiplier(n, ni, bins)
    label = histogram_bins(n, bins)
    for b in range(bins):
        sel = label == b
        if sel.sum() < 2:
            continue
        slope = np.polyfit(ni[sel], n[sel], 1)[0]
        np.testing.assert_allclose(mult.k_star[sel], slope, rtol=1e-9)
        assert not mult.flags[sel].any()


def test_scov_sparse_bins_flagged():
    n = np.array([0.0, 0.1, 0.2, 10.0])
    ni = np.array([1.0, 2.0, 3.0, 4.0])
    mult = scov_multiplier(n, ni, 4)
    assert mult.flags[3] and mult.k_star[3] == 0.0
    est = estimate_scov(n, ni, np.ones(4, bool), 4)
    assert est.method == "scov" and est.flags[3]


def test_snr():
    assert snr([1.0, 1.0, 1.0]) == math.inf
    assert snr([1.0, 3.0]) == pytest.approx(2.0 / math.sqrt(2.0))
    assert snr([1.0, 3.0, np.nan]) == pytest.approx(snr([1.0, 3.0]))
    with pytest.raises(ParameterError):
        snr([1.0])
    assert normalized_snr(10.0, 4.0) == 5.0
    with pytest.raises(ParameterError):
        normalized_snr(1.0, 0.0)


def test_estimate_image_validates_method():
    with pytest.raises(ParameterError):
        EstimateImage(np.zeros(2), "median", 1.0)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 500), min_size=4, max_size=40), st.floats(0.1, 10.0))
def test_t0_scale_invariant(counts, scale):
    n = np.array(counts, dtype=float) + 1.0
    bg = np.zeros(n.size, bool)
    bg[:2] = True
    np.testing.assert_allclose(estimate_t0(n, bg).t_hat, estimate_t0(n * scale, bg).t_hat, rtol=1e-12)


def test_cov_never_increases_temporal_variance():
    rng = np.random.default_rng(5)
    ni = rng.poisson(30, (200, 50)).astype(float)
    n = rng.poisson(10, ni.shape) + rng.binomial(ni.astype(int), 0.3)
    k = cov_multiplier(n, ni).k_star
    corrected = n - k * (ni - ni.mean(axis=0))
    assert np.all(corrected.var(axis=0) <= n.var(axis=0) * (1 + 1e-12))


def test_scale_equivariance_of_every_estimator():
    rng = np.random.default_rng(6)
    ni = rng.poisson(40, (20, 6, 6)).astype(float)
    n = rng.poisson(10, ni.shape) + 0.4 * ni
    bg = np.zeros((6, 6), bool)
    bg[:, :2] = True
    c = 3.7
    pairs = [
        (estimate_t0(n[0], bg), estimate_t0(c * n[0], bg)),
        (estimate_ratio(n[0], ni[0], bg), estimate_ratio(c * n[0], c * ni[0], bg)),
        (estimate_optsub(n[0], ni[0], 0.8, 0.5, 10.0, 2.0, bg), estimate_optsub(c * n[0], c * ni[0], 0.8, 0.5, 10.0, 2.0, bg)),
        (estimate_cov(n, ni, bg), estimate_cov(c * n, c * ni, bg)),
        (estimate_scov(n[0], ni[0], bg, 4), estimate_scov(c * n[0], c * ni[0], bg, 4)),
    ]
    for a, b in pairs:
        np.testing.assert_allclose(a.t_hat, b.t_hat, rtol=1e-10)


def test_snr_examples():
    rng = np.random.default_rng(7)
    assert snr(rng.normal(0.5, 0.05, 200000)) == pytest.approx(10.0, rel=0.01)
    assert normalized_snr(40.0, 1.0) == 40.0
    assert normalized_snr(13.0, 64.0) == pytest.approx(1.625)


def test_scov_single_bin_is_global_slope():
    rng = np.random.default_rng(8)
    ni = rng.poisson(50, 400).astype(float)
    n = 0.6 * ni + rng.normal(0, 3, 400)
    mult = scov_multiplier(n, ni, 1)
    np.testing.assert_allclose(mult.k_star, np.polyfit(ni, n, 1)[0], rtol=1e-10)


def test_cov_enhancement_matches_correlation():
    # rho = 0.8 gives 1 / sqrt(1 - 0.64) = 1.667
    rng = np.random.default_rng(9)
    x = rng.multivariate_normal([0, 0], [[1, 0.8], [0.8, 1]], size=(10000, 20))
    sig, idl = x[..., 0] + 50.0, x[..., 1] + 50.0
    k = cov_multiplier(sig, idl).k_star
    corrected = sig - k * (idl - idl.mean(axis=0))
    enh = np.mean(sig.std(axis=0) / corrected.std(axis=0))
    assert enh == pytest.approx(1.0 / math.sqrt(1 - 0.64), rel=0.05)


def test_uncorrelated_cov_matches_t0_snr():
    rng = np.random.default_rng(10)
    n = rng.poisson(100, (2000, 40)).astype(float)
    ni = rng.poisson(100, (2000, 40)).astype(float)
    bg = np.zeros(40, bool)
    bg[:20] = True
    cov = estimate_cov(n, ni, bg, combine="none").t_hat[:, 25]
    t0 = n[:, 25] / n[:, :20].mean(axis=1)
    assert snr(cov) == pytest.approx(snr(t0), rel=0.05)


def test_scov_beats_t0_on_correlated_image():
    rng = np.random.default_rng(11)
    gains = []
    for _ in range(200):
        ni = rng.poisson(200, 1024).astype(float)
        n = rng.binomial(ni.astype(int), 0.8).astype(float)
        bg = np.ones(1024, bool)
        gains.append(snr(estimate_scov(n, ni, bg, 4).t_hat) / snr(estimate_t0(n, bg).t_hat))
    assert np.mean(gains) > 1.5


def test_arithmetic_examples():
    bg = np.array([True, False])
    assert estimate_t0(np.array([100.0, 50.0]), bg).t_hat[1] == pytest.approx(0.5)
    # N_s = 40, N_i = 80, <N_i> = 80, <N_s^b> = 100
    est_r = estimate_ratio(np.array([100.0, 40.0]), np.array([80.0, 80.0]), bg)
    assert est_r.t_hat[1] == pytest.approx(0.4)
    n = np.array([100.0, 50.0])
    assert np.allclose(estimate_optsub(n, np.array([7.0, 7.0]), 1.0, 0.7, 10.0, 0.0, bg).t_hat, estimate_t0(n, bg).t_hat)
    assert np.allclose(estimate_optsub(n, np.array([3.0, 9.0]), 1.0, 0.7, 0.0, 5.0, bg).t_hat, estimate_t0(n, bg).t_hat)
