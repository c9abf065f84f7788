"""The nonlocal operator as a map on fields.

Two routes:

* ``spectral``: Fourier multiplier ``|n|^alpha`` on the torus (constant kappa);
* ``singular``: quadrature of the symmetrised singular integral
  ``int_0^inf (f(x+z) + f(x-z) - 2 f(x)) kappa(x, z) z^{-1-alpha} dz``
  (one dimension, any admissible kappa).

Sign convention: ``apply_spectral`` returns ``+(-Delta)^{alpha/2} f``; the
generator ``L`` (what ``apply_singular`` and ``apply_generator`` return) is
``-(-Delta)^{alpha/2}`` when ``kappa = c_{d,alpha}``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

from .core import (
    DomainError,
    Field,
    Grid,
    KernelParams,
    UnsupportedRouteError,
    fractional_laplacian_constant,
)
from .quadrature import gauss_legendre, panel_rule

SPECTRAL = "spectral"
SINGULAR = "singular-integral"
ALPHA_CEILING = 2.0 - 1e-3


def apply_spectral(f: Field, alpha: float) -> Field:
    """``(-Delta)^{alpha/2} f`` on the torus: multiply mode n by |n|^alpha."""
    if not f.grid.periodic:
        raise UnsupportedRouteError("the spectral route needs a periodic grid")
    if not 0 < alpha <= 2:
        raise DomainError("alpha must lie in (0, 2]")
    sym = f.grid.mode_norm() ** alpha
    return Field.from_spectrum(f.grid, f.spectrum() * sym)


def _plane_wave_integral(alpha: float, d: int) -> float:
    """int_{R^d} (1 - cos z_1) |z|^{-d-alpha} dz by series plus oscillatory quadrature."""
    from .quadrature import wynn_epsilon

    area = 2 * math.pi ** (d / 2) / math.gamma(d / 2)
    nu = d / 2 - 1
    # spherical mean of cos(rho w_1) is Gamma(nu+1) (2/rho)^nu J_nu(rho) = 1 - sum_j ...
    near = 0.0
    for j in range(1, 30):
        c = math.exp(math.lgamma(nu + 1) - math.lgamma(j + 1) - math.lgamma(nu + j + 1)) / 4 ** j
        near += (-1) ** (j + 1) * c / (2 * j - alpha)
    if d == 1:
        far, _ = integrate.quad(lambda r: r ** (-1 - alpha), 1, np.inf, weight="cos", wvar=1.0)
    elif d == 3:
        far, _ = integrate.quad(lambda r: r ** (-2 - alpha), 1, np.inf, weight="sin", wvar=1.0)
    else:
        zeros = special.jn_zeros(0, 60)
        bounds = np.concatenate([[1.0], zeros])
        pieces = [integrate.quad(lambda r: special.j0(r) * r ** (-1 - alpha), lo, hi)[0]
                  for lo, hi in zip(bounds[:-1], bounds[1:])]
        far, _ = wynn_epsilon(np.cumsum(pieces))
    return area * (near + 1 / alpha - far)


def calibrate_constant(alpha: float, d: int) -> float:
    """The constant c_{d,alpha} making the singular integral equal -(-Delta)^{alpha/2}.

    Computed from the plane-wave identity ``c * int (1 - cos z_1)|z|^{-d-alpha} = 1``
    and cross-checked against the closed form.
    """
    if not 0 < alpha < ALPHA_CEILING:
        raise DomainError(f"calibration needs 0 < alpha < {ALPHA_CEILING} (the constant degenerates at 2)")
    if d not in (1, 2, 3):
        raise DomainError("d must be 1, 2 or 3")
    numeric = 1.0 / _plane_wave_integral(alpha, d)
    closed = fractional_laplacian_constant(alpha, d)
    if abs(numeric - closed) > 1e-7 * closed:
        raise ArithmeticError(f"calibration mismatch: {numeric} vs {closed}")
    return closed


@dataclass(frozen=True)
class OperatorHandle:
    """An operator bound to a grid and an evaluation route."""

    params: KernelParams
    grid: Grid
    route: str = SPECTRAL
    constant: float = field(default=float("nan"))
    tail_periods: int = 2
    growth_constant: float = 0.0

    def __post_init__(self):
        if self.route not in (SPECTRAL, SINGULAR):
            raise DomainError(f"unknown route {self.route!r}")
        if self.route == SPECTRAL:
            if not self.params.constant_kappa:
                raise UnsupportedRouteError("the spectral route needs constant kappa")
            if not self.grid.periodic:
                raise UnsupportedRouteError("the spectral route needs a periodic grid")
        if self.grid.dim != self.params.dim:
            raise DomainError("grid and parameter dimensions differ")
        if math.isnan(self.constant) and self.params.alpha < ALPHA_CEILING:
            object.__setattr__(self, "constant", fractional_laplacian_constant(self.params.alpha, self.params.dim))

    @classmethod
    def build(cls, params: KernelParams, grid: Grid, route: str | None = None, **kw) -> "OperatorHandle":
        """Spectral when possible, singular integral otherwise."""
        if route is None:
            route = SPECTRAL if (params.constant_kappa and grid.periodic) else SINGULAR
        return cls(params, grid, route, **kw)

    def symbol(self) -> np.ndarray:
        """Generator symbol ``-s |n|^alpha`` (constant kappa, torus)."""
        return -self.params.time_scale * self.grid.mode_norm() ** self.params.alpha

    def apply(self, f: Field) -> Field:
        return apply_generator(f, self)


def apply_generator(f: Field, h: OperatorHandle) -> Field:
    """``L f`` by the handle's route."""
    if h.route == SPECTRAL:
        return Field.from_spectrum(f.grid, f.spectrum() * h.symbol())
    return apply_singular(f, h)


@dataclass
class SingularInfo:
    tail_bound: float
    growth_bound: float
    nodes: int
    tol: float

    @property
    def converged(self) -> bool:
        return self.tail_bound + self.growth_bound <= self.tol


def _kappa_table(kappa, x: np.ndarray, z: np.ndarray) -> np.ndarray:
    """kappa(x_i, z_j) as an array of shape (len(z), len(x))."""
    X = np.broadcast_to(x[None, :, None], (z.size, x.size, 1))
    Z = np.broadcast_to(z[:, None, None], (z.size, x.size, 1))
    return np.broadcast_to(kappa(X, Z), (z.size, x.size))


def _second_difference(fhat: np.ndarray, k: np.ndarray, z: np.ndarray, n_out: int) -> np.ndarray:
    """D(x, z) = f(x+z) + f(x-z) - 2 f(x) for band-limited f, without cancellation."""
    mult = -4.0 * np.sin(0.5 * np.outer(z, k)) ** 2
    return np.fft.ifft(fhat[None, :] * mult, axis=1).real[:, :n_out]


def apply_singular(f: Field, h: OperatorHandle, *, full: bool = False, tol: float = 1e-4, chunk: int = 512):
    """``L f`` by quadrature of the symmetrised singular integral (d = 1).

    The second difference is formed spectrally, so nothing cancels as
    ``z -> 0``. On ``[0, h]`` the Taylor terms ``f''(x) int kappa z^{1-alpha}``
    and ``f''''(x) int kappa z^{3-alpha} / 12`` are used (design order
    ``6 - alpha``); ``[h, Z]`` uses Gauss-Legendre panels graded as ``h 2^j``. On the torus the tail ``z > Z = 2 pi M`` is summed
    exactly through the Hurwitz zeta function (kappa frozen at its values on
    the last period); on a truncated line the exterior is taken as zero and
    the declared growth constant bounds what that neglects.
    """
    p = h.params
    a = p.alpha
    if a >= 2:
        raise DomainError("the singular integral diverges at alpha = 2")
    if p.dim != 1:
        raise UnsupportedRouteError("the singular-integral route is implemented for d = 1")
    g = f.grid
    kappa = p.kappa_callable()
    x = g.axis()
    n = g.n
    step = g.h
    if g.periodic:
        fhat = np.fft.fft(f.values)
        k = g.wavenumbers()
        z_far = 2 * np.pi * h.tail_periods
    else:
        # zero-pad to period 6R: shifts up to 2R never wrap back onto the support
        pad = np.zeros(3 * n)
        pad[n:2 * n] = f.values
        fhat = np.fft.fft(np.roll(pad, -n))
        k = 2 * np.pi * np.fft.fftfreq(3 * n, d=step)
        z_far = 2 * g.extent

    # [0, h]: substitute s = z^{2-alpha}
    gx, gw = gauss_legendre(8)
    smax = step ** (2 - a)
    s_nodes = 0.5 * smax * (1 + gx)
    z_in = s_nodes ** (1 / (2 - a))
    kin = _kappa_table(kappa, x, z_in)
    # D(x, z) / z^2 = f2(x) + f4(x) z^2 / 12 + O(z^4), f2 and f4 the even derivatives
    f2 = np.fft.ifft(-(k ** 2) * fhat).real[:n]
    f4 = np.fft.ifft(k ** 4 * fhat).real[:n]
    w_in = 0.5 * smax * gw / (2 - a)
    out = f2 * (w_in @ kin) + f4 * ((w_in * z_in ** 2) @ kin) / 12.0

    # graded panels then uniform panels of width <= 4h
    edges = [step]
    while edges[-1] < min(4 * step, z_far):
        edges.append(min(2 * edges[-1], z_far))
    if edges[-1] < z_far:
        m = int(math.ceil((z_far - edges[-1]) / (4 * step)))
        edges.extend(np.linspace(edges[-1], z_far, m + 1)[1:])
    zq, wq = panel_rule(np.array(edges), 16)
    for i in range(0, zq.size, chunk):
        zz, ww = zq[i:i + chunk], wq[i:i + chunk]
        D = _second_difference(fhat, k, zz, n)
        out = out + np.einsum("j,ji,ji->i", ww * zz ** (-1 - a), _kappa_table(kappa, x, zz), D)

    tail_bound = 0.0
    sup = float(np.max(np.abs(f.values)))
    if g.periodic:
        # z = Z + w + 2 pi j, w in [0, 2 pi): sum_j (Z + w + 2 pi j)^{-1-a} is a Hurwitz zeta
        wedges = np.linspace(0, 2 * np.pi, max(2, int(math.ceil(2 * np.pi / (4 * step)))) + 1)
        wq2, ww2 = panel_rule(wedges, 16)
        zeta = (2 * np.pi) ** (-1 - a) * special.zeta(1 + a, h.tail_periods + wq2 / (2 * np.pi))
        kt = _kappa_table(kappa, x, z_far + wq2)
        for i in range(0, wq2.size, chunk):
            sl = slice(i, i + chunk)
            D = _second_difference(fhat, k, wq2[sl], n)
            out = out + np.einsum("j,ji,ji->i", ww2[sl] * zeta[sl], kt[sl], D)
        # kappa frozen beyond Z: bound the error by its variation across periods
        later = _kappa_table(kappa, x, z_far + 2 * np.pi * 3.5 + wq2[:: max(1, wq2.size // 16)])
        var = float(np.max(np.abs(later - kt[:: max(1, wq2.size // 16)])))
        tail_bound = 4 * sup * var * z_far ** (-a) / a
    else:
        kz = _kappa_table(kappa, x, np.array([z_far]))[0]
        out = out - 2 * f.values * kz * z_far ** (-a) / a
        k0, k1, _, _ = p.declared_bounds()
        tail_bound = 2 * sup * (k1 - k0) * z_far ** (-a) / a if not p.constant_kappa else 0.0

    growth = 0.0
    if not g.periodic and h.growth_constant > 0:
        growth = _growth_tail(p, g, h.growth_constant)
    res = Field(g, out)
    if full:
        return res, SingularInfo(tail_bound, growth, int(zq.size), tol)
    return res


def _growth_tail(p: KernelParams, g: Grid, G: float, eps: float | None = None) -> float:
    """Worst-case contribution of an exterior obeying |f(y)| <= G (1 + |y|^{alpha-eps})."""
    a = p.alpha
    eps = a / 2 if eps is None else eps
    _, k1, _, _ = p.declared_bounds()
    R = g.extent
    worst = 0.0
    for xi in np.linspace(-R + g.h, R - g.h, 9):
        tot = 0.0
        for dist in (R - xi, R + xi):
            val, _ = integrate.quad(lambda z: (1 + (abs(xi) + z) ** (a - eps)) * z ** (-1 - a), dist, np.inf)
            tot += val
        worst = max(worst, k1 * G * tot)
    return worst


def design_order(alpha: float) -> float:
    """Convergence order of :func:`apply_singular` in the grid spacing."""
    return 6.0 - alpha
