import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from fracheat.core import DomainError
from fracheat.oracles import (
    cauchy_cdf,
    gaussian_kernel,
    levy_half_cdf,
    levy_half_density,
    normal_cdf,
    poisson_kernel,
)


def test_gaussian_values():
    assert gaussian_kernel(1.0, 0.0) == pytest.approx(0.2820947918, abs=1e-10)
    assert gaussian_kernel(1.0, np.zeros(3), d=3) == pytest.approx(0.02244839026, abs=1e-10)
    with pytest.raises(DomainError):
        gaussian_kernel(0.0, 1.0)


def test_poisson_values():
    assert poisson_kernel(1.0, 0.0) == pytest.approx(1 / math.pi, rel=1e-15)
    assert poisson_kernel(2.0, np.zeros(2), d=2) == pytest.approx(1 / (8 * math.pi), rel=1e-14)
    with pytest.raises(DomainError):
        poisson_kernel(-1.0, 0.0)


@pytest.mark.parametrize("kernel", [gaussian_kernel, poisson_kernel])
def test_unit_mass_1d(kernel):
    val, _ = integrate.quad(lambda x: kernel(0.7, x), -np.inf, np.inf, epsabs=1e-12)
    assert val == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("d", [2, 3])
def test_unit_mass_radial(d):
    surf = 2 * math.pi ** (d / 2) / math.gamma(d / 2)
    for kernel in (gaussian_kernel, poisson_kernel):
        val, _ = integrate.quad(lambda r: surf * r ** (d - 1) * kernel(0.7, np.array([r] + [0.0] * (d - 1)), d=d),
                                0, np.inf, epsabs=1e-12, limit=200)
        assert val == pytest.approx(1.0, abs=1e-8)


@given(st.floats(0.05, 5), st.floats(-20, 20))
def test_poisson_scaling(t, x):
    assert poisson_kernel(t, x) == pytest.approx(poisson_kernel(1.0, x / t) / t, rel=1e-13)


def test_levy_half_laplace_transform():
    with mpmath.workdps(30):
        f = lambda s: mpmath.exp(-s) * s ** -1.5 * mpmath.exp(-0.25 / s) / (2 * mpmath.sqrt(mpmath.pi))
        ref = mpmath.quad(f, [0, 0.1, 1, 10, mpmath.inf])
    assert float(ref) == pytest.approx(math.exp(-1), abs=1e-12)
    val, _ = integrate.quad(lambda s: math.exp(-s) * levy_half_density(s), 0, np.inf, epsabs=1e-13, limit=200)
    assert val == pytest.approx(math.exp(-1), abs=1e-8)
    mass, _ = integrate.quad(levy_half_density, 0, np.inf, limit=400)
    assert mass == pytest.approx(1.0, abs=1e-7)
    with pytest.raises(DomainError):
        levy_half_density(0.0)


def test_levy_half_envelope_bounded():
    s = np.geomspace(1e-3, 1e3, 400)
    ratio = levy_half_density(s) * s ** 1.5 * np.exp(s ** -0.5)
    assert np.all(np.isfinite(ratio)) and ratio.max() < 1.0


def test_semigroup_gaussian_and_poisson():
    x = np.linspace(-60, 60, 24001)
    h = x[1] - x[0]
    for k in (gaussian_kernel, poisson_kernel):
        conv = np.convolve(k(0.4, x), k(0.6, x), mode="same") * h
        sel = np.abs(x) < 3
        tol = 1e-8 if k is gaussian_kernel else 5e-4  # Poisson tails leave the window
        np.testing.assert_allclose(conv[sel], k(1.0, x[sel]), atol=tol)


def test_poisson_is_subordinated_gaussian():
    for x in (0.0, 0.5, 2.0):
        val, _ = integrate.quad(lambda s: gaussian_kernel(s, x) * levy_half_density(s), 0, np.inf,
                                epsabs=1e-13, limit=400)
        assert val == pytest.approx(poisson_kernel(1.0, x), abs=1e-8)


def test_envelope_interval_poisson():
    t, x = np.meshgrid(np.geomspace(0.01, 1, 50), np.linspace(0, 10, 101))
    r = poisson_kernel(t, x) * (t + x) ** 2 / t
    assert r.min() >= 1 / math.pi - 1e-12 and r.max() <= 2 / math.pi + 1e-12


def test_cdfs():
    assert cauchy_cdf(1.0) == pytest.approx(0.75)
    assert normal_cdf(0.0) == 0.5
    assert levy_half_cdf(np.array([0.0, -1.0]))[0] == 0.0
    val, _ = integrate.quad(levy_half_density, 0, 2.0)
    assert levy_half_cdf(np.array([2.0]))[0] == pytest.approx(val, abs=1e-10)
