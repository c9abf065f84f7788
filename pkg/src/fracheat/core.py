"""Shared value types: kernel parameters, grids, fields and growth weights."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

PERIODIC = "periodic-torus"
TRUNCATED = "truncated-line"


class FracHeatError(Exception):
    """Base class for library errors."""


class DomainError(FracHeatError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class UnsupportedRouteError(FracHeatError):
    """The requested evaluation route cannot handle this input."""


class RouteRequiredError(FracHeatError):
    """The plain route diverges; the named route must be used instead."""

    def __init__(self, message: str, route: str):
        super().__init__(message)
        self.route = route


class InsufficientDataError(FracHeatError, ValueError):
    pass


class ConvergenceError(FracHeatError):
    """Iteration or quadrature failed to meet its tolerance."""

    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = trace


class CFLError(FracHeatError, ValueError):
    def __init__(self, message: str, admissible_dt: float):
        super().__init__(message)
        self.admissible_dt = admissible_dt


class ValidationError(FracHeatError, ValueError):
    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report


# ---------------------------------------------------------------------------
# coefficients


@dataclass(frozen=True)
class SampledKappa:
    """A coefficient kappa(x, z) given as a vectorised callable.

    ``func(x, z)`` receives arrays of shape ``(..., dim)`` and returns shape
    ``(...)``. The bounds ``kappa0 <= kappa <= kappa1`` and the Hölder data
    ``|kappa(x,z) - kappa(y,z)| <= kappa2 |x-y|**beta`` are declared by the
    caller and only checked, never inferred.
    """

    func: Callable[[np.ndarray, np.ndarray], np.ndarray]
    kappa0: float
    kappa1: float
    kappa2: float
    beta: float

    def __call__(self, x, z):
        x = np.asarray(x, float)
        z = np.asarray(z, float)
        shape = np.broadcast_shapes(x.shape[:-1], z.shape[:-1])
        return np.broadcast_to(np.asarray(self.func(x, z), float), shape)


def fractional_laplacian_constant(alpha: float, d: int) -> float:
    """Closed form c_{d,alpha} = 2^a Gamma((d+a)/2) / (pi^{d/2} |Gamma(-a/2)|)."""
    if not (0.0 < alpha < 2.0):
        raise DomainError("c_{d,alpha} is defined for 0 < alpha < 2")
    return 2 ** alpha * math.gamma((d + alpha) / 2) / (math.pi ** (d / 2) * abs(math.gamma(-alpha / 2)))


def _const_kappa(value: float):
    def func(x, z):
        return np.full(np.broadcast_shapes(np.shape(x)[:-1], np.shape(z)[:-1]), value)

    return func


@dataclass(frozen=True)
class KernelParams:
    """Order, dimension and coefficient of one nonlocal operator.

    ``kappa=None`` means the calibrated constant ``c_{d,alpha}``, for which the
    operator is exactly ``-(-Delta)^{alpha/2}``. A float is a constant
    coefficient; a :class:`SampledKappa` is a variable one.
    """

    alpha: float
    dim: int = 1
    kappa: object = None

    def __post_init__(self):
        if not (0.0 < self.alpha <= 2.0):
            raise DomainError(f"alpha must lie in (0, 2], got {self.alpha}")
        if self.dim not in (1, 2, 3):
            raise DomainError(f"dim must be 1, 2 or 3, got {self.dim}")
        if self.kappa is not None and not isinstance(self.kappa, SampledKappa):
            if not float(self.kappa) > 0:
                raise DomainError("constant kappa must be positive")
            object.__setattr__(self, "kappa", float(self.kappa))

    @property
    def constant_kappa(self) -> bool:
        return not isinstance(self.kappa, SampledKappa)

    @property
    def kappa_value(self) -> float:
        """The constant coefficient (calibrated value when ``kappa`` is None)."""
        if not self.constant_kappa:
            raise UnsupportedRouteError("kappa is not constant")
        if self.kappa is None:
            return fractional_laplacian_constant(self.alpha, self.dim)
        return self.kappa

    @property
    def time_scale(self) -> float:
        """Factor s with ``L = -s (-Delta)^{alpha/2}`` for constant kappa."""
        if self.kappa is None or self.alpha == 2.0:
            return 1.0
        return self.kappa_value / fractional_laplacian_constant(self.alpha, self.dim)

    def kappa_callable(self) -> Callable:
        if self.constant_kappa:
            return _const_kappa(self.kappa_value)
        return self.kappa

    def declared_bounds(self):
        """(kappa0, kappa1, kappa2, beta) as declared (constants are exact)."""
        if self.constant_kappa:
            v = self.kappa_value
            return v, v, 0.0, 1.0
        k = self.kappa
        return k.kappa0, k.kappa1, k.kappa2, k.beta


# ---------------------------------------------------------------------------
# grids and fields


@dataclass(frozen=True)
class Grid:
    """Uniform tensor grid.

    Periodic grids always have period 2*pi per axis with nodes
    ``-pi + j*h``; truncated-line grids cover ``[-extent, extent)``.
    """

    n: int
    dim: int = 1
    topology: str = PERIODIC
    extent: float = np.pi

    def __post_init__(self):
        if self.n < 8 or self.n % 2:
            raise DomainError("nodes per axis must be even and >= 8")
        if self.dim not in (1, 2, 3):
            raise DomainError("grid dim must be 1, 2 or 3")
        if self.topology == PERIODIC:
            object.__setattr__(self, "extent", float(np.pi))
        elif self.topology == TRUNCATED:
            if not self.extent > 0:
                raise DomainError("truncated-line extent must be positive")
        else:
            raise DomainError(f"unknown topology {self.topology!r}")

    @classmethod
    def torus(cls, n: int, dim: int = 1) -> "Grid":
        return cls(n=n, dim=dim, topology=PERIODIC)

    @classmethod
    def line(cls, n: int, half_width: float, dim: int = 1) -> "Grid":
        return cls(n=n, dim=dim, topology=TRUNCATED, extent=float(half_width))

    @property
    def periodic(self) -> bool:
        return self.topology == PERIODIC

    @property
    def h(self) -> float:
        return 2.0 * self.extent / self.n

    @property
    def shape(self):
        return (self.n,) * self.dim

    def axis(self) -> np.ndarray:
        return -self.extent + self.h * np.arange(self.n)

    def coords(self) -> np.ndarray:
        """Node coordinates, shape ``shape + (dim,)``."""
        ax = self.axis()
        mesh = np.meshgrid(*([ax] * self.dim), indexing="ij")
        return np.stack(mesh, axis=-1)

    def radius(self) -> np.ndarray:
        """|x| in the chart (for the torus: geodesic distance to 0)."""
        return np.sqrt(np.sum(self.coords() ** 2, axis=-1))

    def wavenumbers(self) -> np.ndarray:
        """Integer Fourier modes per axis in FFT order (periodic only)."""
        return np.fft.fftfreq(self.n, d=1.0 / self.n)

    def mode_norm(self) -> np.ndarray:
        ks = np.meshgrid(*([self.wavenumbers()] * self.dim), indexing="ij")
        return np.sqrt(sum(k ** 2 for k in ks))

    def refined(self, factor: int = 2) -> "Grid":
        return Grid(n=self.n * factor, dim=self.dim, topology=self.topology, extent=self.extent)

    def cell_volume(self) -> float:
        return self.h ** self.dim


def torus_distance(x, y, vector_axis: Optional[int] = None) -> np.ndarray:
    """Geodesic distance on the flat 2*pi torus.

    Per axis the distance is ``min(|x-y|, 2pi-|x-y|)``; pass ``vector_axis``
    to combine coordinates of points in several dimensions.
    """
    d = np.abs(np.asarray(x, float) - np.asarray(y, float)) % (2 * np.pi)
    d = np.minimum(d, 2 * np.pi - d)
    if vector_axis is not None:
        return np.sqrt(np.sum(d ** 2, axis=vector_axis))
    return d


@dataclass(frozen=True, eq=False)
class Field:
    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float, copy=True)
        if v.shape != self.grid.shape:
            raise DomainError(f"values shape {v.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise FracHeatError("field values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid: Grid, func: Callable) -> "Field":
        x = grid.coords()
        if grid.dim == 1:
            return cls(grid, func(x[..., 0]))
        return cls(grid, func(x))

    def _wrap(self, values) -> "Field":
        return Field(self.grid, values)

    def _other(self, other):
        if isinstance(other, Field):
            if other.grid != self.grid:
                raise DomainError("fields live on different grids")
            return other.values
        return other

    def __add__(self, other):
        return self._wrap(self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return self._wrap(self.values - self._other(other))

    def __neg__(self):
        return self._wrap(-self.values)

    def __mul__(self, other):
        return self._wrap(self.values * self._other(other))

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self._wrap(self.values / scalar)

    def power(self, p: float) -> "Field":
        """Pointwise power; non-integer p requires a positive field."""
        if float(p).is_integer():
            return self._wrap(self.values ** int(p))
        if np.any(self.values <= 0):
            raise DomainError("non-integer power of a field with non-positive values")
        return self._wrap(self.values ** p)

    def restrict(self, factor: int) -> "Field":
        """Subsample onto the grid with ``n // factor`` nodes per axis."""
        if self.grid.n % factor:
            raise DomainError("restriction factor must divide n")
        coarse = Grid(self.grid.n // factor, self.grid.dim, self.grid.topology, self.grid.extent)
        sl = (slice(None, None, factor),) * self.grid.dim
        return Field(coarse, self.values[sl])

    def sup(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    def spectrum(self) -> np.ndarray:
        if not self.grid.periodic:
            raise UnsupportedRouteError("spectrum requires a periodic grid")
        return np.fft.fftn(self.values)

    @classmethod
    def from_spectrum(cls, grid: Grid, coeffs: np.ndarray) -> "Field":
        return cls(grid, np.real(np.fft.ifftn(coeffs)))

    def integral(self) -> float:
        return float(np.sum(self.values) * self.grid.cell_volume())


# ---------------------------------------------------------------------------
# growth weight and norms


@dataclass(frozen=True)
class GrowthWeight:
    """w(x) = 1 + |x|**(alpha - epsilon); epsilon defaults to alpha/2."""

    alpha: float
    epsilon: Optional[float] = None

    def __post_init__(self):
        if self.epsilon is None:
            object.__setattr__(self, "epsilon", self.alpha / 2.0)
        if not (0.0 < self.epsilon < self.alpha):
            raise DomainError("epsilon must lie in (0, alpha)")

    @property
    def order(self) -> float:
        return self.alpha - self.epsilon

    def __call__(self, r) -> np.ndarray:
        return 1.0 + np.abs(np.asarray(r, float)) ** self.order


@dataclass(frozen=True)
class Norms:
    sup: float
    weighted: float


def field_norms(f: Field, w: GrowthWeight) -> Norms:
    """Sup-norm and weighted sup-norm ``sup |f| / w``."""
    if f.values.size == 0:
        return Norms(0.0, 0.0)
    a = np.abs(f.values)
    return Norms(float(a.max()), float(np.max(a / w(f.grid.radius()))))


# ---------------------------------------------------------------------------
# parameter validation


@dataclass
class ConditionCheck:
    passed: bool
    measured: float
    first_violation: Optional[tuple] = None


@dataclass
class ValidationReport:
    bounds: ConditionCheck
    symmetry: ConditionCheck
    holder: ConditionCheck
    kappa0: float
    kappa1: float
    kappa2: float
    beta: float

    @property
    def passed(self) -> bool:
        return self.bounds.passed and self.symmetry.passed and self.holder.passed


def default_lattice(dim: int, n: int = 33, half_width: float = np.pi) -> np.ndarray:
    ax = np.linspace(-half_width, half_width, n)
    mesh = np.meshgrid(*([ax] * dim), indexing="ij")
    return np.stack(mesh, axis=-1).reshape(-1, dim)


def validate_params(p: KernelParams, x_lattice: Optional[np.ndarray] = None,
                    z_lattice: Optional[np.ndarray] = None, rtol: float = 1e-12) -> ValidationReport:
    """Check bounds, z-symmetry and the declared Hölder condition on a lattice.

    Report-style: never raises on a violation. Each check carries the first
    violating sample (as ``(x, z)`` or ``(x, y, z)`` tuples).
    """
    k0, k1, k2, beta = p.declared_bounds()
    if p.constant_kappa:
        ok = ConditionCheck(True, 0.0)
        return ValidationReport(ConditionCheck(True, k0), ok, ok, k0, k1, k2, beta)

    d = p.dim
    xs = default_lattice(d) if x_lattice is None else np.asarray(x_lattice, float).reshape(-1, d)
    zs = default_lattice(d, half_width=2.0) if z_lattice is None else np.asarray(z_lattice, float).reshape(-1, d)
    kap = p.kappa_callable()
    vals = kap(xs[:, None, :], zs[None, :, :])
    mirrored = kap(xs[:, None, :], -zs[None, :, :])
    tol = rtol * max(abs(k1), 1.0)

    bad = (vals < k0 - tol) | (vals > k1 + tol) | ~np.isfinite(vals)
    first = None
    if bad.any():
        i, j = np.argwhere(bad)[0]
        first = (tuple(xs[i]), tuple(zs[j]))
    bounds = ConditionCheck(not bad.any(), float(np.nanmin(vals)), first)

    asym = np.abs(vals - mirrored)
    first = None
    if np.any(asym > 0):
        i, j = np.argwhere(asym > 0)[0]
        first = (tuple(xs[i]), tuple(zs[j]))
    symmetry = ConditionCheck(not np.any(asym > 0), float(asym.max()), first)

    # pairwise Hölder quotient over x-pairs, for every z
    dx = np.sqrt(np.sum((xs[:, None, :] - xs[None, :, :]) ** 2, axis=-1))
    iu = np.triu_indices(len(xs), 1)
    dist = dx[iu] ** beta
    worst, first = 0.0, None
    for j in range(len(zs)):
        dv = np.abs(vals[iu[0], j] - vals[iu[1], j])
        excess = dv - k2 * dist
        q = np.max(dv / np.where(dist > 0, dist, np.inf))
        worst = max(worst, float(q))
        if first is None and np.any(excess > tol):
            m = int(np.argmax(excess > tol))
            first = (tuple(xs[iu[0][m]]), tuple(xs[iu[1][m]]), tuple(zs[j]))
    holder = ConditionCheck(first is None, worst, first)
    return ValidationReport(bounds, symmetry, holder, k0, k1, k2, beta)
