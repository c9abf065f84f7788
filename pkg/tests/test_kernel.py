import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from fracheat.core import ConvergenceError, DomainError, KernelParams, RouteRequiredError, SampledKappa, UnsupportedRouteError
from fracheat.kernel import (
    KernelQuery,
    QuadratureSpec,
    contour_time_deriv_at_zero,
    eta1_cdf,
    eta1_density,
    eta1_lower_bound,
    eta1_threshold,
    eval_kernel,
    eval_kernel_contour,
    eval_kernel_subordination,
    eval_space_deriv,
    eval_time_deriv,
    sweep,
)
from fracheat.oracles import gaussian_kernel, levy_half_density, poisson_kernel

FAST = QuadratureSpec(tol=1e-9, abs_tol=1e-14)


def q(alpha, t, r=0.0, d=1, **kw):
    return KernelQuery(KernelParams(alpha, d), t, r, **kw)


# values of (1/pi) int_0^inf (-rho^a)^k exp(-t rho^a) cos(rho r) d rho from an mpmath
# integral along a rotated ray (40 digits), independent of the package's routes
ROTATED_RAY = [
    (0.5, 1.0, 1.0, 0, 0.086107146912604118),
    (1.5, 1.0, 1.0, 0, 0.20203815960784013),
    (1.5, 0.5, 2.0, 0, 0.042621908698744848),
    (0.5, 2.0, 3.0, 0, 0.029016919720154098),
    (1.2, 1.0, 0.5, 0, 0.25999563346108337),
    (1.5, 1.0, 1.0, 1, -0.044285170728135976),
    (1.5, 1.0, 1.0, 2, -0.054848976786270893),
    (0.5, 1.0, 2.0, 1, 0.015476806306798215),
]


def test_query_validation():
    with pytest.raises(DomainError):
        q(1.0, 0.0, 0.0)
    with pytest.raises(DomainError):
        q(1.0, -1.0, 1.0)
    with pytest.raises(DomainError):
        q(1.0, 1.0, 1.0, k=-1)
    assert q(1.0, 1.0, d=3, beta=[1, 0, 0]).beta == (1, 0, 0)
    with pytest.raises(DomainError):
        q(1.0, 1.0, d=3, beta=(1,))


def test_closed_form_examples():
    assert eval_kernel(q(2.0, 1.0)) == pytest.approx(0.2820947918, abs=1e-9)
    assert eval_kernel(q(1.0, 1.0)) == pytest.approx(0.3183098862, abs=1e-9)


@pytest.mark.parametrize("alpha,t,r,k,ref", ROTATED_RAY)
def test_frozen_rotated_ray_values(alpha, t, r, k, ref):
    assert eval_time_deriv(q(alpha, t, r, k=k)) == pytest.approx(ref, rel=1e-10)


# quadosc value of the cosine transform (40 digits): the Fourier sum cancels ~16 digits here
HIGH_ORDER_CANCELLING = (0.5, 0.25, 4.0, 10, -0.00737772253038337)


def test_cancelling_fourier_sum_is_not_returned_silently():
    alpha, t, r, k, ref = HIGH_ORDER_CANCELLING
    res = eval_time_deriv(q(alpha, t, r, k=k), FAST, full=True)
    assert res.value == pytest.approx(ref, rel=1e-9)
    assert res.error <= 1e-9 * abs(res.value)
    assert res.method.startswith("fourier->contour")


@pytest.mark.parametrize("d", [2, 3])
def test_over_budget_fourier_head_uses_equivalent_route(d):
    # R = r t^{-1/alpha} ~ 1e4 would need millions of panels
    qq = q(0.3, 0.05, 0.5, d=d)
    res = eval_kernel(qq, FAST, full=True)
    assert res.method.startswith("fourier->")
    assert res.value == pytest.approx(eval_kernel_subordination(qq), rel=1e-9)
    with pytest.raises(ConvergenceError):
        eval_kernel(qq, QuadratureSpec(tol=1e-9, abs_tol=1e-14, route_fallback=False))


def test_route_fallback_can_be_disabled():
    # an error estimate that misses the target never comes back from the double-precision sum
    spec = QuadratureSpec(tol=1e-9, abs_tol=1e-14, route_fallback=False)
    res = eval_time_deriv(q(0.5, 1.0, 4.0, k=8), spec, full=True)
    assert "contour" not in res.method
    assert res.error <= spec.target(res.value)
    assert res.value == pytest.approx(0.002330344839814759, rel=1e-9)


def test_frozen_higher_dimensional_values():
    # radial Hankel integrals evaluated with mpmath.quadosc
    assert eval_kernel(q(1.5, 1.0, 1.0, d=3)) == pytest.approx(0.02158306605420004, rel=1e-10)
    assert eval_kernel(q(0.5, 1.0, 1.0, d=2)) == pytest.approx(0.02945095211437055, rel=1e-9)


def test_value_at_origin_closed_form():
    # p(1, 0) = Gamma(1 + 1/alpha) / pi in one dimension
    for a in (0.5, 0.8, 1.5, 1.9):
        assert eval_kernel(q(a, 1.0)) == pytest.approx(math.gamma(1 + 1 / a) / math.pi, rel=1e-12)


def test_t_zero_is_refused_on_fourier_route():
    with pytest.raises(DomainError):
        eval_kernel(q(1.0, 0.0, 1.0))
    with pytest.raises(RouteRequiredError) as exc:
        eval_time_deriv(q(1.0, 0.0, 1.0, k=1))
    assert exc.value.route == "contour"


def test_variable_kappa_unsupported():
    k = SampledKappa(lambda x, z: 1 + 0 * x[..., 0], 1.0, 1.0, 0.0, 1.0)
    with pytest.raises(UnsupportedRouteError):
        eval_kernel(KernelQuery(KernelParams(1.0, 1, k), 1.0, 0.0))


def test_poisson_third_time_derivative():
    ref = mpmath.diff(lambda t: t / (mpmath.pi * (t * t + 1)), 0.5, 3)
    assert eval_time_deriv(q(1.0, 0.5, 1.0, k=3)) == pytest.approx(float(ref), abs=1e-7)


def test_gaussian_second_time_derivative():
    assert eval_time_deriv(q(2.0, 1.0, k=2)) == pytest.approx(0.75 * (4 * math.pi) ** -0.5, abs=1e-9)


def test_kappa_scales_time():
    c = 1 / math.pi
    fast = KernelParams(1.0, 1, 2 * c)
    assert eval_kernel(KernelQuery(fast, 0.5, 0.3)) == pytest.approx(poisson_kernel(1.0, 0.3), rel=1e-12)
    assert eval_time_deriv(KernelQuery(fast, 0.5, 0.3, k=1)) == pytest.approx(
        2 * eval_time_deriv(q(1.0, 1.0, 0.3, k=1)), rel=1e-12)


def test_space_derivative_examples():
    v = eval_space_deriv(KernelQuery(KernelParams(1.0, 1), 1.0, x=(1.0,), beta=(1,)))
    assert v == pytest.approx(-1 / (2 * math.pi), abs=1e-9)
    assert eval_space_deriv(q(1.5, 1.0, 0.0, beta=(3,))) == 0.0
    assert eval_space_deriv(KernelQuery(KernelParams(1.0, 2), 1.0, x=(0.0, 0.0), beta=(1, 2))) == 0.0
    assert eval_space_deriv(q(1.5, 0.7, 0.4)) == pytest.approx(eval_kernel(q(1.5, 0.7, 0.4)), rel=1e-14)


def test_space_derivative_higher_dimension_against_closed_form():
    # d_x1 d_x2 of the 2-D Poisson kernel c t (t^2 + |x|^2)^{-3/2}: 15 c t x1 x2 (t^2+|x|^2)^{-7/2}
    x = (0.4, -0.7)
    ref = 15 / (2 * math.pi) * x[0] * x[1] * (1 + x[0] ** 2 + x[1] ** 2) ** -3.5
    v = eval_space_deriv(KernelQuery(KernelParams(1.0, 2), 1.0, x=x, beta=(1, 1)))
    assert v == pytest.approx(ref, rel=1e-9)
    # second derivative of the 3-D Gaussian in x1
    x3 = (0.5, 0.2, -0.1)
    r2 = sum(v * v for v in x3)
    g = (4 * math.pi) ** -1.5 * math.exp(-r2 / 4)
    ref = g * (x3[0] ** 2 / 4 - 0.5)
    v = eval_space_deriv(KernelQuery(KernelParams(2.0, 3), 1.0, x=x3, beta=(2, 0, 0)))
    assert v == pytest.approx(ref, rel=1e-9)


def test_contour_examples():
    assert eval_kernel_contour(q(1.0, 0.0, 1.0)) == pytest.approx(0.0, abs=1e-14)
    assert eval_kernel_contour(q(1.0, 0.0, 1.0, k=1)) == pytest.approx(1 / math.pi, abs=1e-12)
    assert eval_kernel_contour(q(1.5, 0.7, 2.0)) == pytest.approx(eval_kernel(q(1.5, 0.7, 2.0)), abs=1e-8)
    with pytest.raises(DomainError):
        eval_kernel_contour(q(1.0, 1.0, 0.0))
    with pytest.raises(UnsupportedRouteError):
        eval_kernel_contour(q(1.0, 1.0, 1.0, d=2))


def test_contour_at_zero_matches_closed_form():
    for a in (0.5, 0.75, 1.0, 1.5):
        for k in (1, 2, 3, 7):
            res = eval_kernel_contour(q(a, 0.0, 1.3, k=k), full=True)
            ref = contour_time_deriv_at_zero(a, k, 1.3)
            assert abs(res.value - ref) <= max(1e-9 * abs(ref), 10 * res.error, 1e-13)


def test_contour_high_order_uses_extended_precision():
    res = eval_kernel_contour(q(1.0, 0.0, 1.0, k=14), full=True)
    assert "mp" in res.method
    ref = float(mpmath.diff(lambda t: t / (mpmath.pi * (t * t + 1)), 0, 14))
    assert res.value == pytest.approx(ref, rel=1e-10, abs=1e-12)


def test_eta1_examples():
    assert eta1_density(1.0, 1.0) == pytest.approx(math.exp(-0.25) / (2 * math.sqrt(math.pi)), rel=1e-10)
    s = np.geomspace(1e-2, 1e3, 50)
    np.testing.assert_allclose(eta1_density(1.0, s), levy_half_density(s), rtol=1e-9)
    with pytest.raises(DomainError):
        eta1_density(1.0, 0.0)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 1.5])
def test_eta1_normalised(alpha):
    # heavy tail P(S > s) ~ s^{-b} / Gamma(1 - b), b = alpha/2, added analytically
    b = alpha / 2
    S = 1e16
    tail = S ** -b / math.gamma(1 - b)
    assert eta1_cdf(alpha, S) + tail == pytest.approx(1.0, abs=1e-6)
    pieces = np.concatenate([[0.0], np.geomspace(1e-3, S, 40)])
    val = sum(integrate.quad(lambda s: eta1_density(alpha, s), lo, hi, limit=200, epsrel=1e-11)[0]
              for lo, hi in zip(pieces[:-1], pieces[1:]))
    assert val + tail == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 1.5])
def test_eta1_envelope(alpha):
    s = np.geomspace(1e-3, 1e3, 300)
    env = s ** (-1 - alpha / 2) * np.exp(-s ** (-alpha / 2))
    ratio = eta1_density(alpha, s) / env
    assert np.all(np.isfinite(ratio)) and ratio.max() < 10
    s0 = eta1_threshold(alpha)
    big = s[s >= s0]
    assert np.all(eta1_density(alpha, big) >= eta1_lower_bound(alpha, big))


def test_subordination_examples():
    assert eval_kernel_subordination(q(1.0, 1.0)) == pytest.approx(1 / math.pi, abs=1e-6)
    assert eval_kernel_subordination(q(2.0, 0.8, 0.6)) == pytest.approx(gaussian_kernel(0.8, 0.6), rel=1e-14)
    v = eval_kernel_subordination(q(1.5, 0.5, 1.3, d=2))
    assert v == pytest.approx(eval_kernel(q(1.5, 0.5, 1.3, d=2)), abs=1e-6)
    with pytest.raises(DomainError):
        eval_kernel_subordination(q(1.0, 0.0, 1.0))


def test_routes_agree_on_small_grid():
    for a in (0.5, 1.0, 1.5):
        for t in (0.05, 1.0, 4.0):
            for r in (0.0, 0.7, 6.0):
                f = eval_kernel(q(a, t, r), FAST)
                s = eval_kernel_subordination(q(a, t, r))
                assert abs(f - s) <= 1e-6 * max(1.0, f)
                if r > 0:
                    assert abs(eval_kernel_contour(q(a, t, r)) - f) <= 1e-7


@pytest.mark.parametrize("d", [2, 3])
def test_routes_agree_higher_dimensions(d):
    for a in (0.5, 1.5):
        for t, r in ((0.05, 0.0), (1.0, 1.0), (4.0, 6.0)):
            f = eval_kernel(q(a, t, r, d=d), FAST)
            s = eval_kernel_subordination(q(a, t, r, d=d))
            assert abs(f - s) <= 1e-6 * max(1.0, f)


@pytest.mark.parametrize("alpha", [0.5, 1.5])
def test_normalisation_1d(alpha):
    # mass on [0, R] by quadrature plus the tail of the large-r expansion
    # p(1, r) ~ (1/pi) sum_n (-1)^{n+1} Gamma(n a + 1) sin(n pi a / 2) / n! r^{-n a - 1}
    R = 400.0
    edges = [0.0, 1.0, 4.0, 16.0, 64.0, R]
    val = sum(integrate.quad(lambda r: eval_kernel(q(alpha, 1.0, r), FAST), lo, hi, limit=200, epsabs=1e-12)[0]
              for lo, hi in zip(edges[:-1], edges[1:]))
    tail = sum((-1) ** (n + 1) * math.gamma(n * alpha + 1) * math.sin(n * math.pi * alpha / 2)
               / math.factorial(n) * R ** (-n * alpha) / (n * alpha) for n in range(1, 8)) / math.pi
    assert 2 * (val + tail) == pytest.approx(1.0, abs=1e-6)


def test_semigroup_by_convolution():
    a, t1, t2, x = 1.5, 0.3, 0.5, 0.8
    f = lambda y: eval_kernel(q(a, t1, abs(x - y)), FAST) * eval_kernel(q(a, t2, abs(y)), FAST)
    val = sum(integrate.quad(f, lo, hi, limit=200, epsabs=1e-12)[0]
              for lo, hi in ((-np.inf, -20), (-20, 0), (0, x), (x, 20), (20, np.inf)))
    assert val == pytest.approx(eval_kernel(q(a, t1 + t2, x)), abs=1e-6)


def test_space_bound_shape_at_origin():
    # |d_x^k p(1, 0)| = Gamma((k+1)/a) / (pi a) for even k: C_k -> 1 from below
    for a in (0.5, 1.5):
        for k in (2, 6, 10, 14):
            v = abs(eval_space_deriv(q(a, 1.0, 0.0, beta=(k,))))
            assert v == pytest.approx(math.gamma((k + 1) / a) / (math.pi * a), rel=1e-8)


def test_sweep_independent_of_workers():
    qs = [q(1.5, t, r) for t in (0.5, 1.0) for r in (0.0, 1.0, 2.0)]
    a = sweep(qs, "fourier", FAST, workers=1)
    b = sweep(qs, "fourier", FAST, workers=2)
    assert np.array_equal(a, b)
    with pytest.raises(UnsupportedRouteError):
        sweep(qs, "nope")


@given(st.floats(0.3, 1.9), st.floats(0.1, 3.0), st.floats(0.0, 5.0))
def test_scaling_law(alpha, t, r):
    lhs = eval_kernel(q(alpha, t, r), FAST)
    rhs = t ** (-1 / alpha) * eval_kernel(q(alpha, 1.0, r * t ** (-1 / alpha)), FAST)
    assert lhs == pytest.approx(rhs, rel=1e-8, abs=1e-14)


@given(st.floats(0.3, 2.0), st.floats(0.05, 4.0), st.floats(0.0, 8.0), st.sampled_from([1, 2, 3]))
def test_positivity(alpha, t, r, d):
    # positive wherever the value is resolved; far Gaussian-like tails sit below the absolute floor
    v = eval_kernel(q(alpha, t, r, d=d), FAST)
    assert v > 0 or abs(v) <= FAST.abs_tol


@given(st.floats(0.3, 1.9), st.floats(0.1, 3.0), st.floats(0.0, 5.0))
def test_zeroth_derivative_is_kernel(alpha, t, r):
    assert eval_time_deriv(q(alpha, t, r, k=0), FAST) == eval_kernel(q(alpha, t, r), FAST)
