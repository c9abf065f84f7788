"""Evaluation of the fractional heat kernel and its derivatives.

Three independent routes are provided:

* radial Fourier quadrature (any d <= 3, t > 0),
* contour rotation of the frequency ray (d = 1, r > 0, any t >= 0),
* subordination of the Gaussian kernel by the one-sided alpha/2-stable law.

Every query is first rescaled to ``t = 1`` (or to ``r = 1`` when ``t = 0``)
with the exact scaling law, so quadrature always runs in one regime.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence

import mpmath
import numpy as np
from scipy import optimize, special

from .core import ConvergenceError, DomainError, KernelParams, RouteRequiredError, UnsupportedRouteError
from .quadrature import (
    graded_edges,
    mp_panel_quad,
    panel_rule,
    tanh_sinh_rule,
    wynn_epsilon,
)

_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class QuadratureSpec:
    """Accuracy controls for the quadrature routes.

    Attributes
    ----------
    order : Gauss-Legendre nodes per panel.
    rho_max : frequency truncation radius at ``t = 1``; ``None`` picks the
        radius where the integrand envelope has dropped by ``exp(-41)``, which
        keeps the neglected tail far below ``tol / 2``.
    tol : relative accuracy target; results whose error estimate exceeds it
        are recomputed in extended precision when possible. Otherwise the
        double-precision value is returned with its error estimate (see
        ``full=True``), or ConvergenceError is raised if no digit survives.
    abs_tol : absolute floor for the accuracy target.
    max_panels : direct panel budget before switching to tail extrapolation.
    tail_terms : half-period terms fed to the epsilon extrapolation.
    max_head_panels : panel budget for the directly summed head of a long
        oscillatory range; beyond it the Fourier sum is not attempted.
    route_fallback : when the Fourier sum misses ``tol`` or is over budget,
        answer by an equivalent route instead of extended precision: the
        rotated contour in d = 1 and d = 3 (``r > 0``), subordination for the
        kernel itself in d = 2. Switch it off to keep the Fourier route
        independent of the other routes.
    """

    order: int = 20
    rho_max: Optional[float] = None
    tol: float = 1e-10
    abs_tol: float = 1e-300
    max_panels: int = 6000
    tail_terms: int = 48
    max_head_panels: int = 200_000
    route_fallback: bool = True

    def __post_init__(self):
        if not self.tol > 0:
            raise DomainError("tolerance target must be positive")
        if self.order < 4:
            raise DomainError("need at least 4 nodes per panel")

    def target(self, value: float) -> float:
        return max(self.tol * abs(value), self.abs_tol)


DEFAULT_SPEC = QuadratureSpec()


@dataclass(frozen=True)
class KernelQuery:
    """One point query ``d^k/dt^k d^beta/dx^beta p(t, x)``.

    ``r`` is |x|. For mixed space derivatives in d >= 2 the direction matters;
    pass ``x`` explicitly, otherwise ``x = (r, 0, ..., 0)``.
    """

    params: KernelParams
    t: float
    r: float = 0.0
    k: int = 0
    beta: tuple = ()
    x: Optional[tuple] = None

    def __post_init__(self):
        d = self.params.dim
        if self.x is not None:
            x = tuple(float(v) for v in self.x)
            if len(x) != d:
                raise DomainError(f"x must have {d} components")
            object.__setattr__(self, "x", x)
            object.__setattr__(self, "r", math.sqrt(sum(v * v for v in x)))
        beta = tuple(int(b) for b in self.beta) if self.beta else (0,) * d
        if len(beta) != d or any(b < 0 for b in beta):
            raise DomainError("beta must be a d-tuple of non-negative integers")
        object.__setattr__(self, "beta", beta)
        if self.t < 0 or self.r < 0 or self.k < 0:
            raise DomainError("need t >= 0, r >= 0, k >= 0")
        if self.t == 0 and self.r == 0:
            raise DomainError("(t, r) = (0, 0) is the singular point of the kernel")

    @property
    def point(self) -> tuple:
        if self.x is not None:
            return self.x
        return (self.r,) + (0.0,) * (self.params.dim - 1)

    @property
    def order(self) -> int:
        return sum(self.beta)


def _require_constant(q: KernelQuery):
    if not q.params.constant_kappa:
        raise UnsupportedRouteError("kernel routes need a constant coefficient")


def _eff_time(q: KernelQuery) -> float:
    return q.t * q.params.time_scale


# ---------------------------------------------------------------------------
# oscillatory weights


def _lambda_series(nu: float, z):
    """Gamma(nu+1) (2/z)^nu J_nu(z) by its power series (good for small z)."""
    z = np.asarray(z, float)
    q = -0.25 * z * z
    term = np.ones_like(z)
    total = np.ones_like(z)
    for j in range(1, 200):
        term = term * q / (j * (nu + j))
        total = total + term
        if np.all(np.abs(term) <= 1e-17 * np.abs(total) + 1e-300):
            break
    return total


def _lambda(nu: float, z):
    """Radial Fourier weight Lambda_nu(z) = Gamma(nu+1) (2/z)^nu J_nu(z)."""
    z = np.asarray(z, float)
    if nu == -0.5:
        return np.cos(z)
    if nu == 0.5:
        return np.sinc(z / np.pi)
    small = z < max(2.0, nu + 1.0)
    out = np.empty_like(z)
    out[small] = _lambda_series(nu, z[small])
    zl = z[~small]
    logpref = special.gammaln(nu + 1) + nu * np.log(2.0 / zl)
    out[~small] = np.exp(logpref) * special.jv(nu, zl)
    return out


def _mp_lambda(nu: float, z):
    if nu == -0.5:
        return mpmath.cos(z)
    if nu == 0.5:
        return mpmath.sin(z) / z
    nu = mpmath.mpf(nu)
    return mpmath.gamma(nu + 1) * (2 / z) ** nu * mpmath.besselj(nu, z)


@dataclass(frozen=True)
class _Osc:
    """Oscillatory factor: ``cos(z + theta)`` or ``Lambda_nu(z)``."""

    kind: str
    param: float

    def __call__(self, z):
        if self.kind == "trig":
            return np.cos(z + self.param)
        return _lambda(self.param, z)

    def mp(self, z):
        if self.kind == "trig":
            return mpmath.cos(z + self.param)
        return _mp_lambda(self.param, z)

    def zero_phase(self) -> float:
        """theta with asymptotic zeros at z = pi/2 - theta + j pi."""
        if self.kind == "trig":
            return self.param
        return -self.param * np.pi / 2 - np.pi / 4


# ---------------------------------------------------------------------------
# Fourier route


def _envelope_extent(m: float, alpha: float, drop: float = 41.0):
    """Peak and cut-off of rho^m exp(-rho^alpha)."""
    if m <= 0:
        return 0.0, drop ** (1.0 / alpha)
    peak = (m / alpha) ** (1.0 / alpha)
    top = m * math.log(peak) - peak ** alpha

    def g(r):
        return m * math.log(r) - r ** alpha - (top - drop)

    hi = 2 * peak + 1
    while g(hi) > 0:
        hi *= 2
    return peak, optimize.brentq(g, peak, hi, xtol=1e-12 * hi)


@dataclass
class QuadResult:
    value: float
    error: float
    mass: float
    method: str


def _fourier_edges(m, alpha, R, spec, drop=41.0):
    peak, rmax = _envelope_extent(m, alpha, drop)
    if spec.rho_max is not None:
        rmax = spec.rho_max
    w_amp = max(rmax / 200.0, 1e-3)
    w = min(np.pi / R, w_amp) if R > 0 else w_amp
    return peak, rmax, w


def _fourier_integral(m: float, alpha: float, R: float, osc: _Osc, spec: QuadratureSpec,
                      escalate: bool = True) -> QuadResult:
    """int_0^inf rho^m exp(-rho^alpha) osc(rho R) d rho.

    With ``escalate`` off a double-precision result is returned even when its
    error estimate misses the target; the caller decides what to do with it.
    """
    peak, rmax, w = _fourier_edges(m, alpha, R, spec)

    def f(rho):
        return np.exp(m * np.log(rho) - rho ** alpha) * osc(rho * R)

    if rmax / w <= spec.max_panels:
        edges = np.concatenate([graded_edges(0.0, w)[:-1], np.arange(w, rmax, w), [rmax]])
        x, wt = panel_rule(edges, spec.order)
        vals = f(x) * wt
        value = math.fsum(vals)
        mass = float(np.sum(np.abs(vals)))
        res = QuadResult(value, 2 * _EPS * mass, mass, "panels")
        if escalate and res.error > spec.target(value):
            res = _fourier_mp(m, alpha, R, osc, spec, res)
        return res

    # long oscillatory range: head by panels, tail by epsilon extrapolation
    half = np.pi / R
    theta = osc.zero_phase()
    z_target = max(2 * peak + 1.0, 40 * half) * R
    if z_target / np.pi > spec.max_head_panels:
        raise ConvergenceError(f"Fourier head needs ~{z_target / np.pi:.3g} panels (budget {spec.max_head_panels})")
    j = math.ceil((z_target - (np.pi / 2 - theta)) / np.pi)
    rho_h = (np.pi / 2 - theta + j * np.pi) / R
    edges = np.concatenate([graded_edges(0.0, half)[:-1], np.arange(half, rho_h, half), [rho_h]])
    if edges[-2] >= rho_h - 1e-9 * half:
        edges = np.delete(edges, -2)
    x, wt = panel_rule(edges, spec.order)
    vals = f(x) * wt
    head = math.fsum(vals)
    mass = float(np.sum(np.abs(vals)))
    t_edges = rho_h + half * np.arange(spec.tail_terms + 1)
    xt, wtt = panel_rule(t_edges, spec.order)
    terms = (f(xt) * wtt).reshape(spec.tail_terms, spec.order).sum(axis=1)
    tail, err = wynn_epsilon(np.cumsum(terms))
    mass += float(np.sum(np.abs(terms)))
    value = head + tail
    res = QuadResult(value, err + 8 * _EPS * mass, mass, "panels+extrapolation")
    if escalate and res.error > spec.target(value):
        if rmax / w <= 4 * spec.max_panels:
            return _fourier_mp(m, alpha, R, osc, spec, res)
        # too long for extended precision: keep the honest estimate unless no digit survives
        if res.error >= abs(value):
            raise ConvergenceError(f"Fourier sum lost all digits (value {value:.3g}, error {res.error:.3g})",
                                   trace=res)
    return res


def _fourier_mp(m, alpha, R, osc, spec, first: QuadResult) -> QuadResult:
    """Re-run the panel rule in extended precision until the digits suffice.

    The truncation radius is pushed out together with the working precision,
    since a cut-off at exp(-41) of the envelope is only small relative to the
    integrand mass, not to a value that cancels far below it.
    """
    lost = math.log10(max(first.mass, 1e-300) / max(abs(first.value), first.mass * 1e-60))
    need = -math.log10(spec.tol)
    for _ in range(5):
        dps = int(max(30, lost + need + 8))
        drop = 41.0 + (lost + need) * math.log(10)
        _, rmax, w = _fourier_edges(m, alpha, R, spec, drop)
        edges = np.concatenate([graded_edges(0.0, w, levels=24 + int(lost))[:-1], np.arange(w, rmax, w), [rmax]])
        with mpmath.workdps(dps):
            mm, aa, RR = mpmath.mpf(m), mpmath.mpf(alpha), mpmath.mpf(R)

            def g(rho):
                return mpmath.exp(mm * mpmath.log(rho) - rho ** aa) * osc.mp(rho * RR)

            val, mass = mp_panel_quad(g, edges, spec.order, dps)
            value = float(val)
            mass = float(mass)
        new_lost = math.log10(mass / max(abs(value), mass * 10.0 ** (-dps)))
        if new_lost <= lost + 1:
            err = mass * 10.0 ** (-(dps - 3))
            return QuadResult(value, max(err, _EPS * abs(value)), mass, f"mp-panels(dps={dps})")
        lost = new_lost
    return QuadResult(value, mass * 10.0 ** (-(dps - lost)), mass, f"mp-panels(dps={dps})")


def _radial_const(D: int) -> float:
    """(2 pi)^{-D} |S^{D-1}|."""
    return (2 * np.pi) ** (-D) * 2 * np.pi ** (D / 2) / math.gamma(D / 2)


def _fallback(D: int, alpha: float, k: int, R: float, spec: QuadratureSpec):
    """Equivalent evaluation of d_t^k p_D(1, R) by another route, or None."""
    if not spec.route_fallback or R == 0:
        return None
    force = k + 1 >= MP_ORDER_THRESHOLD
    if D == 1:
        def run():
            # p_1 is the cosine transform, so the rotated ray gives the same number
            alt = _contour_unit(alpha * k, (-1.0) ** k, alpha, 1.0, R, spec, force_mp=force)
            return QuadResult(alt.value, alt.error, alt.mass, "fourier->" + alt.method)
        return run
    if D == 3:
        def run():
            # p_3(t, r) = -(1 / (2 pi r)) d_r p_1(t, r)
            alt = _contour_unit(alpha * k + 1, (-1.0) ** k * 1j, alpha, 1.0, R, spec, force_mp=force)
            c = -1.0 / (2 * np.pi * R)
            return QuadResult(c * alt.value, abs(c) * alt.error, abs(c) * alt.mass, "fourier->" + alt.method)
        return run
    if D == 2 and k == 0:
        def run():
            alt = eval_kernel_subordination(KernelQuery(KernelParams(alpha, 2), 1.0, R), spec, full=True)
            return QuadResult(alt.value, alt.error, alt.mass, "fourier->" + alt.method)
        return run
    return None


def _radial_time_deriv_unit(D: int, alpha: float, k: int, R: float, spec: QuadratureSpec) -> QuadResult:
    """d_t^k p_D(1, R) through the D-dimensional radial integral."""
    fallback = _fallback(D, alpha, k, R, spec)
    try:
        res = _fourier_integral(alpha * k + D - 1, alpha, R, _Osc("bessel", D / 2 - 1), spec,
                                escalate=fallback is None)
    except ConvergenceError:
        if fallback is None:
            raise
        return fallback()
    if fallback is not None and res.error > spec.target(res.value):
        return fallback()
    c = _radial_const(D) * (-1) ** k
    return QuadResult(c * res.value, abs(c) * res.error, abs(c) * res.mass, res.method)


def eval_time_deriv(q: KernelQuery, spec: QuadratureSpec = DEFAULT_SPEC, *, full: bool = False):
    """Time derivative d_t^k p(t, x) by radial Fourier quadrature.

    Raises
    ------
    RouteRequiredError
        For ``t = 0``: the frequency integral has no damping there, so the
        query must go through :func:`eval_kernel_contour`.
    """
    _require_constant(q)
    if q.order:
        return eval_space_deriv(q, spec, full=full)
    t = _eff_time(q)
    if t == 0:
        raise RouteRequiredError("the Fourier integral diverges at t = 0; use the contour route", "contour")
    a, d, k = q.params.alpha, q.params.dim, q.k
    R = q.r * t ** (-1.0 / a)
    res = _radial_time_deriv_unit(d, a, k, R, spec)
    # chain rule for the time rescaling by kappa
    scale = t ** (-k - d / a) * q.params.time_scale ** k
    out = QuadResult(scale * res.value, scale * res.error, scale * res.mass, res.method)
    return out if full else out.value


def eval_kernel(q: KernelQuery, spec: QuadratureSpec = DEFAULT_SPEC, *, full: bool = False):
    """p(t, x) by radial Fourier quadrature (``t > 0``)."""
    _require_constant(q)
    if q.k or q.order:
        raise DomainError("eval_kernel takes k = 0 and beta = 0; use the derivative evaluators")
    if q.t == 0:
        raise DomainError("the kernel is not defined by the Fourier route at t = 0")
    return eval_time_deriv(q, spec, full=full)


def _lifting_terms(beta: Sequence[int], x: Sequence[float]):
    """Expand d^beta F(|x|^2/2) = sum_j c_j F^{(j)}(|x|^2/2); returns {j: c_j}."""
    coeff = {}
    ranges = [range(b // 2 + 1) for b in beta]
    for ms in itertools.product(*ranges):
        c = 1.0
        for b, mi, xi in zip(beta, ms, x):
            p = b - 2 * mi
            c *= math.factorial(b) / (math.factorial(mi) * math.factorial(p) * 2 ** mi)
            if p:
                c *= xi ** p
        j = sum(beta) - sum(ms)
        coeff[j] = coeff.get(j, 0.0) + c
    return coeff


def eval_space_deriv(q: KernelQuery, spec: QuadratureSpec = DEFAULT_SPEC, *, full: bool = False):
    """Space derivative d^beta of d_t^k p(t, x) by Fourier quadrature.

    In one dimension the weight ``(i xi)^n`` gives the phase-shifted cosine
    transform directly. In d >= 2 the radial kernel is written as
    ``F(|x|^2/2)`` and ``F^{(j)} = (-2 pi)^j p_{d+2j}`` (dimension lifting),
    so derivatives reduce to radial kernels in higher dimensions.
    """
    _require_constant(q)
    t = _eff_time(q)
    if t == 0:
        raise RouteRequiredError("the Fourier integral diverges at t = 0; use the contour route", "contour")
    a, d, k = q.params.alpha, q.params.dim, q.k
    n = q.order
    if n == 0:
        return eval_time_deriv(q, spec, full=full)
    ts = q.params.time_scale ** k
    if any(b % 2 and xi == 0.0 for b, xi in zip(q.beta, q.point)):
        # p is even in each coordinate, so an odd derivative vanishes on that hyperplane
        out = QuadResult(0.0, 0.0, 0.0, "symmetry")
        return out if full else out.value
    if d == 1:
        x = q.point[0]
        R = abs(x) * t ** (-1.0 / a)
        res = _fourier_integral(a * k + n, a, R, _Osc("trig", n * np.pi / 2), spec)
        sign = (-1) ** k * ((-1) ** n if x < 0 else 1)
        scale = sign * t ** (-k - (1 + n) / a) / np.pi * ts
        out = QuadResult(scale * res.value, abs(scale) * res.error, abs(scale) * res.mass, res.method)
        return out if full else out.value
    x = np.asarray(q.point) * t ** (-1.0 / a)
    R = float(np.sqrt(np.sum(x ** 2)))
    total, err, mass = 0.0, 0.0, 0.0
    for j, c in _lifting_terms(q.beta, x).items():
        if c == 0.0:
            continue
        res = _radial_time_deriv_unit(d + 2 * j, a, k, R, spec)
        f = c * (-2 * np.pi) ** j
        total += f * res.value
        err += abs(f) * res.error
        mass += abs(f) * res.mass
    scale = t ** (-k - (d + n) / a) * ts
    out = QuadResult(scale * total, abs(scale) * err, abs(scale) * mass, "lifting")
    return out if full else out.value


# ---------------------------------------------------------------------------
# contour route (d = 1)


def contour_angle(alpha: float) -> float:
    return min(np.pi / 16, np.pi / (16 * alpha))


def _contour_edges(m, alpha, t, x, phi, order_drop=41.0):
    decay_a, decay_b = t * math.cos(alpha * phi), x * math.sin(phi)

    def logamp(e):
        return (m * math.log(e) if m else 0.0) - decay_a * e ** alpha - decay_b * e

    grid = np.geomspace(1e-6, 1e8, 400)
    la = np.array([logamp(e) for e in grid])
    ipk = int(np.argmax(la))
    top = la[ipk]
    hi = grid[ipk] * 2 + 1
    while logamp(hi) > top - order_drop:
        hi *= 2
    emax = optimize.brentq(lambda e: logamp(e) - (top - order_drop), grid[ipk], hi)
    freq = x * math.cos(phi)
    w = min(np.pi / freq if freq > 0 else np.inf, emax / 100)
    return np.concatenate([graded_edges(0.0, w)[:-1], np.arange(w, emax, w), [emax]])


def _contour_unit(m: float, phase: complex, alpha: float, t: float, x: float, spec: QuadratureSpec,
                  force_mp: bool = False) -> QuadResult:
    """(1/pi) Re[phase e^{i phi (m+1)} int eta^m exp(-t eta^a e^{i a phi} + i x eta e^{i phi}) d eta]."""
    phi = contour_angle(alpha)
    need = -math.log10(spec.tol)
    if not force_mp:
        edges = _contour_edges(m, alpha, t, x, phi)
        a_c = t * np.exp(1j * alpha * phi)
        b_c = 1j * x * np.exp(1j * phi)
        pref = phase * np.exp(1j * phi * (m + 1)) / np.pi
        e, wt = panel_rule(edges, spec.order)
        logm = m * np.log(e) if m else 0.0
        vals = np.exp(logm - a_c * e ** alpha + b_c * e) * wt
        value = float((pref * np.sum(vals)).real)
        mass = float(np.sum(np.abs(vals))) / np.pi
        res = QuadResult(value, 2 * _EPS * mass, mass, "contour-panels")
        if res.error <= spec.target(value):
            return res
        lost = math.log10(mass / max(abs(value), mass * 1e-16))
    else:
        # expected cancellation ~ (1/sin phi)^{m+1}
        lost = (m + 1) * math.log10(1 / math.sin(phi))
    for _ in range(5):
        dps = int(max(30, lost + need + 8))
        edges = _contour_edges(m, alpha, t, x, phi, 41.0 + (lost + need) * math.log(10))
        with mpmath.workdps(dps):
            mm, aa = mpmath.mpf(m), mpmath.mpf(alpha)
            ph = mpmath.mpf(phi)
            ac = mpmath.mpf(t) * mpmath.expj(aa * ph)
            bc = 1j * mpmath.mpf(x) * mpmath.expj(ph)

            def g(e):
                return mpmath.exp(mm * mpmath.log(e) - ac * e ** aa + bc * e)

            z, mass = mp_panel_quad(g, edges, spec.order, dps)
            pf = mpmath.mpc(phase) * mpmath.expj(ph * (mm + 1)) / mpmath.pi
            value = float(mpmath.re(pf * z))
            mass = float(mass) / math.pi
            new_lost = math.log10(mass / max(abs(value), mass * 10.0 ** (-dps)))
            if new_lost <= lost + 1:
                # discretisation error from a lower-order rule on the same panels
                z_lo, _ = mp_panel_quad(g, edges, spec.order - 6, dps)
                disc = abs(float(mpmath.re(pf * (z - z_lo))))
                err = disc + mass * 10.0 ** (-(dps - 3))
                return QuadResult(value, err, mass, f"contour-mp(dps={dps})")
        lost = new_lost
    return QuadResult(value, mass * 10.0 ** (-(dps - lost)), mass, f"contour-mp(dps={dps})")


MP_ORDER_THRESHOLD = 12


def eval_kernel_contour(q: KernelQuery, spec: QuadratureSpec = DEFAULT_SPEC, *, full: bool = False):
    """d_t^k d_x^n p(t, x) in one dimension along the rotated ray arg xi = phi.

    Converges for every ``t >= 0`` as long as ``r > 0``; at ``t = 0`` the
    result is the Abel limit of the derivative as ``t -> 0+``.
    """
    _require_constant(q)
    if q.params.dim != 1:
        raise UnsupportedRouteError("the contour route is implemented for d = 1")
    if q.r == 0:
        raise DomainError("the contour route needs r > 0 (no damping at x = 0)")
    a, k, n = q.params.alpha, q.k, q.order
    x = q.point[0]
    t = _eff_time(q)
    if n:
        m, phase = float(n), 1j ** n
    else:
        m, phase = a * k, (-1.0) ** k
    if k and n:
        m, phase = a * k + n, (-1.0) ** k * 1j ** n
    if t > 0:
        T, X = 1.0, abs(x) * t ** (-1.0 / a)
        scale = t ** (-k - (1 + n) / a)
    else:
        T, X = 0.0, 1.0
        scale = abs(x) ** (-a * k - n - 1)
    force = (k + n) >= MP_ORDER_THRESHOLD
    res = _contour_unit(m, phase, a, T, X, spec, force_mp=force)
    sign = (-1) ** n if (x < 0 and n % 2) else 1
    scale *= sign * q.params.time_scale ** k
    out = QuadResult(scale * res.value, abs(scale) * res.error, abs(scale) * res.mass, res.method)
    return out if full else out.value


def contour_time_deriv_at_zero(alpha: float, k: int, x: float) -> float:
    """Closed form of d_t^k p(0+, x) in d = 1 (Abel limit), x != 0."""
    r = abs(x)
    g = math.exp(math.lgamma(alpha * k + 1) - (alpha * k + 1) * math.log(r))
    c = math.cos(np.pi * math.fmod(alpha * k + 1, 4.0) / 2)
    if abs(c) < 1e-14:
        c = 0.0
    return g / math.pi * (-1) ** k * c


# ---------------------------------------------------------------------------
# subordination


@lru_cache(maxsize=16)
def _zolotarev_nodes(rho: float):
    """A(u) on tanh-sinh nodes of (0, pi), with the rule's weights."""
    x, w, lo, hi = tanh_sinh_rule(1 / 128, 3.6)
    dlo, dhi = np.pi / 2 * lo, np.pi / 2 * hi
    u = np.where(dlo < dhi, dlo, np.pi - dhi)
    sin_u = np.where(dlo < dhi, np.sin(dlo), np.sin(dhi))
    s1 = np.sin(rho * u)
    s2 = np.where(dlo < dhi, np.sin((1 - rho) * u), np.sin((1 - rho) * np.pi - (1 - rho) * dhi))
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        logA = (rho * np.log(s1) + (1 - rho) * np.log(s2) - np.log(sin_u)) / (1 - rho)
    A = np.exp(logA)
    A0 = rho ** (rho / (1 - rho)) * (1 - rho)
    ok = np.isfinite(A)
    return A[ok], (np.pi / 2 * w)[ok], A0


_SERIES_SWITCH = 0.05


def _eta1_series(rho: float, s: np.ndarray, cdf: bool = False, terms: int = 60) -> np.ndarray:
    """Large-s expansion of the density (or of 1 - cdf)."""
    out = np.zeros_like(s)
    for n in range(1, terms + 1):
        c = (-1) ** (n + 1) * math.exp(math.lgamma(n * rho + 1) - math.lgamma(n + 1)) * math.sin(n * np.pi * rho)
        out = out + c * s ** (-n * rho) / (n * rho if cdf else s)
    return out / np.pi


def _eta1_values(rho: float, s: np.ndarray, cdf: bool = False) -> np.ndarray:
    s = np.asarray(s, float)
    far = s ** (-rho) <= _SERIES_SWITCH
    if np.any(far):
        out = np.empty_like(s)
        tail = _eta1_series(rho, s[far], cdf)
        out[far] = 1.0 - tail if cdf else tail
        out[~far] = _eta1_zolotarev(rho, s[~far], cdf)
        return out
    return _eta1_zolotarev(rho, s, cdf)


def _eta1_zolotarev(rho: float, s: np.ndarray, cdf: bool = False) -> np.ndarray:
    A, w, A0 = _zolotarev_nodes(rho)
    xi = s ** (-rho / (1 - rho))
    out = np.empty_like(xi)
    flat_x, flat_o = xi.ravel(), out.ravel()
    step = max(1, 2_000_000 // A.size)
    for i in range(0, flat_x.size, step):
        xs = flat_x[i:i + step, None]
        # factor out exp(-xi A0) for relative accuracy when xi is large
        ex = np.exp(-xs * (A - A0))
        if cdf:
            flat_o[i:i + step] = np.exp(-xs[:, 0] * A0) * (ex @ w) / np.pi
        else:
            flat_o[i:i + step] = np.exp(-xs[:, 0] * A0) * (ex @ (w * A)) / np.pi
    if not cdf:
        out = out * rho / (1 - rho) * xi / s
    return out.reshape(s.shape)


def eta1_density(alpha: float, s):
    """Density of the one-sided alpha/2-stable law (Laplace transform exp(-lambda^{alpha/2})).

    Uses the Zolotarev single-integral form, integrated over (0, pi) by
    tanh-sinh quadrature.
    """
    if not (0 < alpha < 2):
        raise DomainError("eta1_density needs alpha in (0, 2)")
    s_arr = np.asarray(s, float)
    if np.any(s_arr <= 0) or not np.all(np.isfinite(s_arr)):
        raise DomainError("eta1_density needs s > 0")
    out = _eta1_values(alpha / 2, s_arr)
    return float(out) if out.ndim == 0 else out


def eta1_cdf(alpha: float, s):
    """Distribution function of the same law."""
    if not (0 < alpha < 2):
        raise DomainError("eta1_cdf needs alpha in (0, 2)")
    s_arr = np.asarray(s, float)
    if np.any(s_arr <= 0):
        raise DomainError("eta1_cdf needs s > 0")
    out = _eta1_values(alpha / 2, s_arr, cdf=True)
    return float(out) if out.ndim == 0 else out


def eta1_tail_series(alpha: float, s, terms: int = 80):
    """Convergent large-s expansion of the density, used beyond s^{-alpha/2} = 0.05."""
    return _eta1_series(alpha / 2, np.asarray(s, float), terms=terms)


def eta1_lower_bound(alpha: float, s):
    """The power-law minorant alpha s^{-1-alpha/2} / (4 Gamma(1 - alpha/2))."""
    s = np.asarray(s, float)
    return alpha * s ** (-1 - alpha / 2) / (4 * math.gamma(1 - alpha / 2))


def eta1_threshold(alpha: float, s_grid=None) -> float:
    """Smallest grid point s0 with density >= minorant on all grid points >= s0.

    Reported empirically; returns ``inf`` if the bound fails at the largest
    grid point.
    """
    if s_grid is None:
        s_grid = np.geomspace(1e-3, 1e6, 400)
    s_grid = np.asarray(s_grid, float)
    ok = eta1_density(alpha, s_grid) >= eta1_lower_bound(alpha, s_grid)
    if not ok[-1]:
        return math.inf
    bad = np.nonzero(~ok)[0]
    return float(s_grid[0] if bad.size == 0 else s_grid[bad[-1] + 1])


@lru_cache(maxsize=16)
def _subordination_grid(alpha: float, h: float = 0.02):
    """Log-spaced grid of s with weights s * eta1(s) * h."""
    rho = alpha / 2
    _, _, A0 = _zolotarev_nodes(rho)
    # below s_lo the density is < exp(-45) relative
    s_lo = (45.0 / A0) ** (-(1 - rho) / rho)
    y = np.arange(math.log(s_lo), 120.0, h)
    s = np.exp(y)
    return s, eta1_density(alpha, s) * s * h


def eval_kernel_subordination(q: KernelQuery, spec: QuadratureSpec = DEFAULT_SPEC, *, full: bool = False):
    """p(t, x) = int_0^inf E(t^{2/alpha} s, x) eta1(s) ds, E the Gaussian kernel.

    The outer integral is the trapezoidal rule in ``log s``, which is
    spectrally accurate for this smooth, doubly decaying integrand.
    """
    _require_constant(q)
    if q.k or q.order:
        raise DomainError("the subordination route evaluates the kernel only (k = 0, beta = 0)")
    t = _eff_time(q)
    if t <= 0:
        raise DomainError("the subordination route needs t > 0")
    a, d = q.params.alpha, q.params.dim
    r = q.r
    if a == 2.0:
        value = (4 * np.pi * t) ** (-d / 2) * math.exp(-r * r / (4 * t))
        res = QuadResult(value, 0.0, value, "gaussian")
        return res if full else res.value
    s, w = _subordination_grid(a)
    tau = t ** (2.0 / a) * s
    e = (4 * np.pi * tau) ** (-d / 2) * np.exp(-r * r / (4 * tau))
    vals = e * w
    value = math.fsum(vals)
    # tail beyond the grid with the leading asymptotics eta1 ~ c s^{-1-rho}
    rho = a / 2
    S = s[-1]
    c = rho / math.gamma(1 - rho)
    value += c * (4 * np.pi * t ** (2 / a)) ** (-d / 2) * S ** (-rho - d / 2) / (rho + d / 2)
    res = QuadResult(value, 1e-13 * float(np.sum(np.abs(vals))), float(np.sum(np.abs(vals))), "subordination")
    return res if full else res.value


# ---------------------------------------------------------------------------
# sweeps


ROUTES = {
    "fourier": eval_time_deriv,
    "contour": eval_kernel_contour,
    "subordination": eval_kernel_subordination,
}


def _eval_one(args):
    route, q, spec = args
    return ROUTES[route](q, spec)


def sweep(queries: Sequence[KernelQuery], route: str = "fourier", spec: QuadratureSpec = DEFAULT_SPEC,
          workers: int = 1) -> np.ndarray:
    """Evaluate many queries; the result does not depend on ``workers``."""
    if route not in ROUTES:
        raise UnsupportedRouteError(f"unknown route {route!r}")
    jobs = [(route, q, spec) for q in queries]
    if workers <= 1 or len(jobs) < 2:
        return np.array([_eval_one(j) for j in jobs])
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return np.array(list(ex.map(_eval_one, jobs, chunksize=max(1, len(jobs) // (4 * workers)))))
