"""Closed-form max-square bounds, their Monte Carlo checks, and the quadrature."""

import math

import numpy as np
import pytest

from wushkit import stats_bounds as sb
from wushkit.errors import InvalidCovariance, InvalidSpec, ValidationError


def _phi(t):
    return 0.5 * (1.0 + math.erf(t / math.sqrt(2.0)))


# ---------------------------------------------------------------------------
# closed-form bounds


def test_gaussian_bound_frozen_values():
    assert sb.gaussian_max_bound(1) == 1.0
    assert sb.gaussian_max_bound(4) == 4.0
    assert math.isclose(sb.gaussian_max_bound(1024), 17.249237972318795, rel_tol=1e-13)


def test_gaussian_bound_crossover():
    # the linear branch wins up to d = 7, the logarithmic one from d = 8 on
    assert sb.gaussian_max_bound(7) == 7.0
    assert sb.gaussian_max_bound(8) == 2.0 * math.log(16.0) + 2.0
    for d in range(1, 1 << 14):
        expected = min(float(d), 2.0 * math.log(2.0 * d) + 2.0)
        assert sb.gaussian_max_bound(d) == expected


def test_laplacian_bound_frozen_values():
    assert sb.laplacian_max_bound(1) == 1.0
    # accepts non-integer dimensions: at d = e^2 the bound is 2 + 2 + 1
    assert math.isclose(sb.laplacian_max_bound(math.e ** 2), 5.0, rel_tol=1e-12)
    assert math.isclose(sb.laplacian_max_bound(1024), 31.954122501509524, rel_tol=1e-13)


def test_bounds_scale_with_variance():
    assert sb.gaussian_max_bound(32, 2.5) == 2.5 * sb.gaussian_max_bound(32)
    assert sb.laplacian_max_bound(32, 2.5) == 2.5 * sb.laplacian_max_bound(32)
    assert sb.gaussian_max_bound(32, 0.0) == 0.0


def test_bound_validation():
    for fn in (sb.gaussian_max_bound, sb.laplacian_max_bound):
        with pytest.raises(InvalidSpec):
            fn(0.5)
        with pytest.raises(InvalidCovariance):
            fn(4, -1.0)


def test_consistent_flag():
    base = dict(d=4, family="gaussian", correlated=False)
    assert sb.MaxSqEstimate(1.2, 0.1, 1.0, **base).consistent()  # within 3 SE
    assert not sb.MaxSqEstimate(5.0, 0.1, 1.0, **base).consistent()


# ---------------------------------------------------------------------------
# Monte Carlo estimates


def test_mc_gaussian_d1_is_plain_variance():
    est = sb.mc_max_sq("gaussian", 1, n_samples=100_000, seed=1)
    assert est.d == 1 and est.family == "gaussian" and not est.correlated
    assert est.bound == 1.0
    assert abs(est.empirical - 1.0) <= 4.0 * est.se


def test_mc_gaussian_d4_matches_quadrature_oracle():
    oracle = sb.survival_expectation(
        lambda t: 2.0 * t,
        lambda t: 1.0 - (2.0 * _phi(t) - 1.0) ** 4,
        sb.SURVIVAL_HI_SIGMA,
    )
    assert math.isclose(oracle, 2.4702103878495225, rel_tol=1e-10)
    est = sb.mc_max_sq("gaussian", 4, n_samples=200_000, seed=2024)
    assert abs(est.empirical - oracle) <= 4.0 * est.se


def test_mc_laplacian_d4_matches_quadrature_oracle():
    # unit-variance Laplace has scale 1/sqrt(2): P(|X| > t) = exp(-sqrt(2) t)
    oracle = sb.survival_expectation(
        lambda t: 2.0 * t,
        lambda t: 1.0 - (1.0 - math.exp(-math.sqrt(2.0) * t)) ** 4,
        40.0,
    )
    assert math.isclose(oracle, 2.881944444514749, rel_tol=1e-10)
    est = sb.mc_max_sq("laplacian", 4, n_samples=200_000, seed=2024)
    assert abs(est.empirical - oracle) <= 4.0 * est.se


def test_mc_correlated_keeps_unit_marginals():
    # at d = 1 every structure degenerates to the marginal second moment
    for family in sb.FAMILIES:
        est = sb.mc_max_sq(family, 1, cov="correlated", n_samples=100_000, seed=3)
        assert est.correlated
        assert abs(est.empirical - 1.0) <= 4.0 * est.se


def test_mc_variance_scaling():
    est = sb.mc_max_sq("gaussian", 4, n_samples=50_000, seed=4, var=9.0)
    ref = sb.mc_max_sq("gaussian", 4, n_samples=50_000, seed=4, var=1.0)
    assert math.isclose(est.empirical, 9.0 * ref.empirical, rel_tol=1e-12)
    assert est.bound == 9.0 * ref.bound


@pytest.mark.parametrize("family", sb.FAMILIES)
@pytest.mark.parametrize("cov", sb.COV_STRUCTURES)
def test_mc_stays_below_bound(family, cov):
    for d in (2, 4, 16, 64):
        est = sb.mc_max_sq(family, d, cov, n_samples=20_000, seed=7)
        assert est.consistent()
        assert est.empirical < est.bound  # comfortably inside at these dims


def test_mc_chunking_is_invisible():
    a = sb.mc_max_sq("gaussian", 4, n_samples=5000, seed=3)
    b = sb.mc_max_sq("gaussian", 4, n_samples=5000, seed=3, chunk_scalars=64)
    assert math.isclose(a.empirical, b.empirical, rel_tol=1e-10)
    assert math.isclose(a.se, b.se, rel_tol=1e-8)


def test_mc_validation():
    with pytest.raises(InvalidSpec):
        sb.mc_max_sq("cauchy", 4)
    with pytest.raises(InvalidSpec):
        sb.mc_max_sq("gaussian", 4, cov="toeplitz")
    with pytest.raises(InvalidSpec):
        sb.mc_max_sq("gaussian", 0)
    with pytest.raises(ValidationError):
        sb.mc_max_sq("gaussian", 4, n_samples=1)
    with pytest.raises(InvalidCovariance):
        sb.mc_max_sq("gaussian", 4, rho=1.0)
    with pytest.raises(InvalidCovariance):
        sb.mc_max_sq("gaussian", 4, var=0.0)


# ---------------------------------------------------------------------------
# quadrature


def test_adaptive_simpson_exact_on_cubic():
    got = sb.adaptive_simpson(lambda t: 3.0 * t * t * (1.0 - t), 0.0, 1.0)
    assert math.isclose(got, 0.25, rel_tol=1e-14)


def test_adaptive_simpson_covers_whole_interval():
    # mass concentrated in the upper half must not be dropped
    assert math.isclose(sb.adaptive_simpson(lambda t: t, 0.0, 2.0), 2.0, rel_tol=1e-13)
    bump = sb.adaptive_simpson(lambda t: math.exp(-100.0 * (t - 0.9) ** 2), 0.0, 1.0)
    half = math.sqrt(math.pi / 100.0)
    assert math.isclose(bump, half * 0.5 * (1.0 + math.erf(1.0)), rel_tol=1e-6)


def test_adaptive_simpson_gaussian_integral():
    got = sb.adaptive_simpson(
        lambda t: 2.0 / math.sqrt(math.pi) * math.exp(-t * t), 0.0, 10.0
    )
    assert math.isclose(got, 1.0, rel_tol=1e-9)


def test_adaptive_simpson_validation():
    with pytest.raises(ValidationError):
        sb.adaptive_simpson(lambda t: t, 1.0, 1.0)


def test_survival_expectation_exponential_moment():
    # X ~ Exp(1): E X^2 = 2 via the layer-cake identity
    got = sb.survival_expectation(lambda t: 2.0 * t, lambda t: math.exp(-t), 60.0)
    assert math.isclose(got, 2.0, rel_tol=1e-9)
