import math

import mpmath
import numpy as np
import pytest
from scipy import integrate, stats

from spherepriv.bessel import DEBYE_MIN_ORDER, HANKEL_MIN_ARG, log_iv
from spherepriv.geometry import normalize, orthonormal_pair, rotate_in_plane, uniform_sample, angular_distances
from spherepriv.vmf import (
    VmfParams,
    log_density,
    log_density_rows,
    mean_resultant_length,
    sample_cosines,
    sample_vmf,
)

mpmath.mp.dps = 40


def _mp_log_iv(nu, x):
    return float(mpmath.log(mpmath.besseli(mpmath.mpf(nu), mpmath.mpf(x))))


@pytest.mark.parametrize("dim", [2, 3, 4, 7, 16, 39, 40, 41, 42, 64, 128, 512])
@pytest.mark.parametrize("x", [1e-8, 0.3, 1.0, 7.5, 19.99, 20.0, 45.0, 130.0, 255.0, 256.0, 499.0, 500.0, 2e3, 1e5])
def test_log_iv_matches_arbitrary_precision(dim, x):
    nu = dim / 2 - 1
    ref = _mp_log_iv(nu, x)
    # relative accuracy of I_nu, i.e. absolute accuracy of its log
    assert abs(log_iv(nu, x) - ref) <= 1e-10 * max(1.0, abs(ref) * 1e-3)


def test_log_iv_regime_crossovers_are_continuous():
    for nu in (DEBYE_MIN_ORDER, 25.5, 100.0, 255.0):
        lo, hi = log_iv(nu, nu * (1 - 1e-12)), log_iv(nu, nu)
        assert abs(hi - lo) < 1e-9
    for nu in (0.0, 0.5, 7.0, 19.5):
        lo, hi = log_iv(nu, HANKEL_MIN_ARG * (1 - 1e-12)), log_iv(nu, HANKEL_MIN_ARG)
        assert abs(hi - lo) < 1e-9


def test_log_iv_edge_values():
    assert log_iv(0.0, 0.0) == 0.0
    assert log_iv(3.0, 0.0) == -math.inf
    with pytest.raises(ValueError):
        log_iv(-1.0, 1.0)


def test_mean_resultant_length_values():
    assert mean_resultant_length(5, 0.0) == 0.0
    coth = float(mpmath.coth(10) - mpmath.mpf(1) / 10)
    assert mean_resultant_length(3, 10.0) == pytest.approx(coth, abs=1e-12)
    # von Mises on the circle: ratio of integrals of cos(phi) e^{2 cos phi}
    num = integrate.quad(lambda p: math.cos(p) * math.exp(2 * math.cos(p)), 0, math.pi)[0]
    den = integrate.quad(lambda p: math.exp(2 * math.cos(p)), 0, math.pi)[0]
    assert mean_resultant_length(2, 2.0) == pytest.approx(num / den, abs=1e-12)
    assert mean_resultant_length(2, 2.0) == pytest.approx(0.6978, abs=5e-5)
    vals = [mean_resultant_length(512, k) for k in (0.5, 1, 10, 50, 200, 1e3, 1e5)]
    assert all(a < b for a, b in zip(vals, vals[1:])) and vals[-1] < 1


def test_sample_kappa_zero_is_uniform():
    mu = normalize(np.arange(1.0, 9.0))
    y = sample_vmf(VmfParams(mu, 0.0), np.random.default_rng(3), 1_000_000)
    assert abs((y @ mu).mean()) < 0.005


def test_sample_moments_closed_forms():
    y = sample_vmf(VmfParams(np.array([0.0, 0.0, 1.0]), 10.0), np.random.default_rng(4), 1_000_000)
    assert abs(y[:, 2].mean() - (1 / math.tanh(10) - 0.1)) < 0.001
    y = sample_vmf(VmfParams(np.array([0.6, 0.8]), 2.0), np.random.default_rng(5), 1_000_000)
    assert abs((y @ np.array([0.6, 0.8])).mean() - 0.6978) < 0.002


def test_samples_are_unit_norm_and_deterministic():
    mu = normalize(np.ones(64))
    a = sample_vmf(VmfParams(mu, 50.0), np.random.default_rng(6), 1000)
    b = sample_vmf(VmfParams(mu, 50.0), np.random.default_rng(6), 1000)
    np.testing.assert_array_equal(a, b)
    assert np.abs(np.linalg.norm(a, axis=1) - 1).max() < 1e-12
    single = sample_vmf(VmfParams(mu, 50.0), np.random.default_rng(6))
    assert single.shape == (64,)


@pytest.mark.parametrize("kappa", [0.5, 5.0, 50.0])
def test_cosine_marginal_ks_dim3(kappa):
    # at dim 3, w = <mu, y> has density proportional to exp(kappa w) on [-1, 1]
    mu = normalize([1.0, -2.0, 0.5])
    y = sample_vmf(VmfParams(mu, kappa), np.random.default_rng(int(kappa * 10)), 1_000_000)
    w = np.clip(y @ mu, -1, 1)

    def cdf(t):
        return np.expm1(kappa * (t + 1)) / np.expm1(2 * kappa)

    assert stats.kstest(w, cdf).pvalue > 0.001


@pytest.mark.parametrize("dim,kappa", [(16, 10.0), (64, 3.0), (512, 200.0), (512, 1.0), (4, 1e6)])
def test_sample_mean_matches_bessel_ratio(dim, kappa):
    w, _ = sample_cosines(dim, kappa, np.random.default_rng(dim), 200_000)
    expected = mean_resultant_length(dim, kappa)
    sd = math.sqrt(max(w.var(), 1e-30) / w.size)
    assert abs(w.mean() - expected) < 5 * sd + 1e-12


def test_monotone_concentration():
    mu = normalize(np.ones(32))
    means = []
    for kappa in (0.1, 1, 5, 20, 100, 1000):
        y = sample_vmf(VmfParams(mu, kappa), np.random.default_rng(11), 20_000)
        means.append(angular_distances(y, np.broadcast_to(mu, y.shape)).mean())
    assert all(a > b for a, b in zip(means, means[1:]))


def test_rotational_equivariance_dim3():
    r = np.random.default_rng(12)
    mu = normalize([0.2, 0.3, 0.9])
    # Q = composition of two plane rotations
    b1 = orthonormal_pair([1.0, 0, 0], [0, 1.0, 0])
    b2 = orthonormal_pair([0, 1.0, 0], [0, 0, 1.0])

    def q(v):
        return rotate_in_plane(rotate_in_plane(v, b1, 0.7), b2, -1.3)

    direct = sample_vmf(VmfParams(q(mu), 4.0), r, 400_000)
    mapped = np.array([q(v) for v in sample_vmf(VmfParams(mu, 4.0), r, 20_000)])
    for stat in (lambda s: s.mean(axis=0), lambda s: (s**2).mean(axis=0), lambda s: (s[:, 0] * s[:, 1]).mean()):
        np.testing.assert_allclose(stat(mapped), stat(direct), atol=0.02)


def test_log_density_closed_form_dim3():
    mu = np.array([0.0, 0.0, 1.0])
    exact = float(mpmath.log(1 / (4 * mpmath.pi * mpmath.sinh(1))) + 1)
    assert abs(log_density(mu, VmfParams(mu, 1.0)) - exact) < 1e-10


def test_log_density_difference_is_linear(rng):
    for dim in (3, 16, 512):
        mu = uniform_sample(dim, rng)
        y1, y2 = uniform_sample(dim, rng), uniform_sample(dim, rng)
        p = VmfParams(mu, 37.0)
        assert log_density(y1, p) - log_density(y2, p) == pytest.approx(37.0 * (mu @ y1 - mu @ y2), abs=1e-10)


def test_density_integrates_to_one_dim3():
    p = VmfParams(np.array([0.0, 0.0, 1.0]), 5.0)
    # integrate over the sphere in (cos polar angle, azimuth); the azimuth gives 2 pi
    val = 2 * math.pi * integrate.quad(lambda t: math.exp(log_density(np.array([math.sqrt(1 - t * t), 0, t]), p)), -1, 1, epsabs=1e-13)[0]
    assert abs(val - 1) < 1e-6


def test_density_integrates_to_one_high_dim():
    # marginal of w on S^{n-1}: area(S^{n-2}) (1 - w^2)^{(n-3)/2} times the density
    from spherepriv.geometry import log_unit_sphere_area

    for dim, kappa in ((16, 8.0), (64, 40.0)):
        c = log_density(np.eye(dim)[0], VmfParams(np.eye(dim)[0], kappa)) - kappa
        f = lambda w: math.exp(c + kappa * w + log_unit_sphere_area(dim - 1) + (dim - 3) / 2 * math.log1p(-w * w))
        assert abs(integrate.quad(f, -1, 1, epsabs=1e-13, limit=200)[0] - 1) < 1e-6


def test_pointwise_privacy_bound():
    r = np.random.default_rng(13)
    for dim in (3, 16, 512):
        x1, x2, y = (uniform_sample(dim, r, 100_000) for _ in range(3))
        d2 = np.linalg.norm(x1 - x2, axis=1)
        dang = angular_distances(x1, x2)
        for eps in (0.1, 1.0, 50.0):
            ratio = log_density_rows(y, x1, eps) - log_density_rows(y, x2, eps)
            assert np.all(ratio <= eps * d2 + 1e-9)
            assert np.all(eps * d2 <= eps * dang + 1e-9)
