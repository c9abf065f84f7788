"""Evolution engines and kernel-bound harnesses.

* :func:`evolve_mild` - exact spectral propagation or explicit method of lines;
* :func:`evolve_variable_kappa` - method of lines with the singular-integral operator;
* :func:`duhamel_nonlinear` - Picard iteration of the Duhamel formula for
  ``u_t = L u + u^p``;
* :func:`bound_check` - dimensionless kernel ratios on R^d and on the torus.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .core import (
    CFLError,
    ConvergenceError,
    DomainError,
    Field,
    Grid,
    KernelParams,
    UnsupportedRouteError,
    ValidationError,
    validate_params,
)
from .kernel import KernelQuery, QuadratureSpec, eval_time_deriv
from .operator import SINGULAR, SPECTRAL, OperatorHandle, apply_generator

SPECTRAL_EXACT = "spectral-exact"
MOL_EXPLICIT = "mol-explicit"


@dataclass(frozen=True)
class EvolveSpec:
    """How to evolve: exact multiplier or explicit midpoint stepping.

    ``dt=None`` picks the admissible step ``c_cfl / max|symbol|``.
    """

    method: str = SPECTRAL_EXACT
    dt: Optional[float] = None
    T: Optional[float] = None
    p: Optional[Fraction] = None
    c_cfl: float = 0.25

    def __post_init__(self):
        if self.method not in (SPECTRAL_EXACT, MOL_EXPLICIT):
            raise DomainError(f"unknown method {self.method!r}")
        if self.dt is not None and not self.dt > 0:
            raise DomainError("dt must be positive")
        if self.p is not None:
            object.__setattr__(self, "p", Fraction(self.p).limit_denominator(1000))
            if self.p <= 0:
                raise DomainError("the power p must be positive")


def max_symbol(params: KernelParams, grid: Grid) -> float:
    """Largest generator eigenvalue magnitude resolvable on ``grid``.

    Uses the declared upper bound kappa1 for variable coefficients.
    """
    from .core import fractional_laplacian_constant

    a = params.alpha
    kmax = (np.pi / grid.h) * math.sqrt(grid.dim)
    if params.constant_kappa:
        s = params.time_scale
    else:
        s = params.declared_bounds()[1] / fractional_laplacian_constant(a, params.dim)
    return s * kmax ** a


def admissible_dt(params: KernelParams, grid: Grid, c_cfl: float = 0.25) -> float:
    """``c_cfl / max|symbol|``, i.e. ``c_cfl h^alpha / (s pi^alpha)`` in one dimension."""
    return c_cfl / max_symbol(params, grid)


def _spectral_propagate(u0: Field, t: float, params: KernelParams) -> Field:
    if not u0.grid.periodic:
        raise UnsupportedRouteError("exact spectral evolution needs a periodic grid")
    if not params.constant_kappa:
        raise UnsupportedRouteError("exact spectral evolution needs constant kappa")
    h = OperatorHandle(params, u0.grid, SPECTRAL)
    return Field.from_spectrum(u0.grid, u0.spectrum() * np.exp(t * h.symbol()))


@dataclass
class StepInfo:
    dt: float
    steps: int
    sup_trace: list = field(default_factory=list)

    @property
    def monotone(self) -> bool:
        s = np.asarray(self.sup_trace)
        return bool(np.all(np.diff(s) <= 1e-12 * max(1.0, s.max(initial=0.0))))


def _midpoint(u0: Field, t: float, h: OperatorHandle, dt: float, info: StepInfo) -> Field:
    n = max(1, int(math.ceil(t / dt - 1e-12)))
    step = t / n
    u = u0
    info.sup_trace.append(u.sup())
    for _ in range(n):
        mid = u + apply_generator(u, h) * (0.5 * step)
        u = u + apply_generator(mid, h) * step
        info.sup_trace.append(u.sup())
    info.steps = n
    info.dt = step
    return u


def _check_dt(params, grid, dt, c_cfl):
    adm = admissible_dt(params, grid, c_cfl)
    if dt is None:
        return adm
    if dt > adm * (1 + 1e-12):
        raise CFLError(f"dt={dt:.4g} exceeds the admissible step {adm:.4g}", adm)
    return dt


def evolve_mild(u0: Field, t: float, spec: EvolveSpec = EvolveSpec(), params: Optional[KernelParams] = None,
                *, full: bool = False):
    """Solution of ``u_t = L u`` at time ``t``.

    ``spectral-exact`` multiplies mode n by ``exp(-t s |n|^alpha)``;
    ``mol-explicit`` steps with the explicit midpoint rule and the
    singular-integral operator.
    """
    if params is None:
        raise DomainError("evolve_mild needs the operator parameters")
    if t < 0:
        raise DomainError("t must be non-negative")
    if t == 0:
        return (u0, StepInfo(0.0, 0, [u0.sup()])) if full else u0
    if spec.method == SPECTRAL_EXACT:
        out = _spectral_propagate(u0, t, params)
        return (out, StepInfo(t, 1, [u0.sup(), out.sup()])) if full else out
    dt = _check_dt(params, u0.grid, spec.dt, spec.c_cfl)
    h = OperatorHandle(params, u0.grid, SINGULAR)
    info = StepInfo(dt, 0)
    out = _midpoint(u0, t, h, dt, info)
    return (out, info) if full else out


def evolve_variable_kappa(u0: Field, t: float, params: KernelParams, dt: Optional[float] = None,
                          c_cfl: float = 0.25, *, full: bool = False):
    """Explicit midpoint stepping of ``u_t = L u`` with a general coefficient."""
    report = validate_params(params)
    if not report.passed:
        raise ValidationError("coefficient fails validation", report)
    if t < 0:
        raise DomainError("t must be non-negative")
    dt = _check_dt(params, u0.grid, dt, c_cfl)
    info = StepInfo(dt, 0)
    if t == 0:
        info.sup_trace.append(u0.sup())
        return (u0, info) if full else u0
    h = OperatorHandle(params, u0.grid, SINGULAR)
    out = _midpoint(u0, t, h, dt, info)
    return (out, info) if full else out


def mol_error_model(u0: Field, t: float, params: KernelParams, dt: Optional[float] = None,
                    c_cfl: float = 0.25) -> float:
    """A-priori bound on |mol - exact| for constant kappa on the torus.

    Spatial part: ``t |(L_h - L) u0|_inf`` (the operator defect, propagated by
    a contraction); temporal part: ``t dt^2 / 6 |L^3 u0|_inf`` (midpoint local
    error summed over the steps).
    """
    dt = admissible_dt(params, u0.grid, c_cfl) if dt is None else dt
    hs = OperatorHandle(params, u0.grid, SPECTRAL)
    hq = OperatorHandle(params, u0.grid, SINGULAR)
    Lu = apply_generator(u0, hs)
    defect = (apply_generator(u0, hq) - Lu).sup()
    L3 = apply_generator(apply_generator(Lu, hs), hs).sup()
    n = max(1, int(math.ceil(t / dt - 1e-12)))
    step = t / n
    return t * defect + t * step ** 2 / 6 * L3


# ---------------------------------------------------------------------------
# nonlinear mild solutions


def _power(values: np.ndarray, p: Fraction, floor: float) -> np.ndarray:
    if p.denominator == 1:
        return values ** int(p)
    if np.min(values) <= floor:
        raise DomainError(f"rational power p={p} needs u > {floor}; min u = {np.min(values):.3g}")
    return values ** float(p)


@dataclass
class DuhamelResult:
    field: Field
    iterations: int
    contraction: float
    trace: list
    levels: list


def _duhamel_once(u0: Field, t: float, p: Fraction, n_steps: int, symbol: np.ndarray, tol: float,
                  max_iter: int, floor: float, blowup: float):
    """Picard sweeps of u(t_i) = P(t_i) u0 + sum_j phi_ij u(s_j)^p (right-endpoint product rule)."""
    ds = t / n_steps
    lam = symbol
    decay = np.exp(lam * ds)
    with np.errstate(divide="ignore", invalid="ignore"):
        phi = np.where(lam != 0, np.expm1(lam * ds) / np.where(lam != 0, lam, 1.0), ds)
    u0hat = np.fft.fftn(u0.values)
    # initial iterate: the linear evolution
    lin = [u0hat]
    for _ in range(n_steps):
        lin.append(lin[-1] * decay)
    U = [np.real(np.fft.ifftn(v)) for v in lin]
    trace = []
    ratios = []
    for it in range(1, max_iter + 1):
        V = [U[0]]
        vh = u0hat
        for i in range(1, n_steps + 1):
            F = np.fft.fftn(_power(U[i], p, floor))
            vh = vh * decay + phi * F
            V.append(np.real(np.fft.ifftn(vh)))
        diff = max(float(np.max(np.abs(a - b))) for a, b in zip(U, V))
        size = max(float(np.max(np.abs(v))) for v in V)
        trace.append(diff)
        if len(trace) >= 2 and trace[-2] > 0:
            ratios.append(trace[-1] / trace[-2])
        U = V
        if not np.isfinite(diff) or size > blowup or (len(trace) > 3 and diff > 10 * trace[0]):
            raise ConvergenceError("Picard iteration diverges (data too large for the horizon)", trace)
        if diff <= tol * max(1.0, size):
            contraction = float(np.max(ratios)) if ratios else 0.0
            return U[-1], it, contraction, trace
    raise ConvergenceError("Picard iteration did not reach the tolerance", trace)


def duhamel_nonlinear(u0: Field, t: float, p, n_steps: int = 64, params: Optional[KernelParams] = None,
                      tol: float = 1e-13, max_iter: int = 200, levels: int = 4, floor: float = 0.0,
                      blowup: float = 1e8, *, full: bool = False):
    """Mild solution of ``u_t = L u + u^p`` by Picard iteration of the Duhamel formula.

    The s-integral uses the right-endpoint product rule matched to the
    semigroup (first order in the step). ``levels`` runs with ``n_steps``,
    ``2 n_steps``, ... are combined by Richardson extrapolation, which raises
    the order to ``levels``.
    """
    if params is None:
        raise DomainError("duhamel_nonlinear needs the operator parameters")
    if not u0.grid.periodic or not params.constant_kappa:
        raise UnsupportedRouteError("the Duhamel solver runs on the spectral semigroup (torus, constant kappa)")
    p = Fraction(p).limit_denominator(1000)
    if p <= 0:
        raise DomainError("p must be positive")
    if p.denominator != 1:
        _power(u0.values, p, floor)
    if t == 0:
        return DuhamelResult(u0, 0, 0.0, [], []) if full else u0
    sym = OperatorHandle(params, u0.grid, SPECTRAL).symbol()
    runs = []
    info = []
    for lev in range(levels):
        n = n_steps * 2 ** lev
        vals, it, contraction, trace = _duhamel_once(u0, t, p, n, sym, tol, max_iter, floor, blowup)
        runs.append(vals)
        info.append({"n_steps": n, "iterations": it, "contraction": contraction, "trace": trace})
    # Richardson table for an error expansion in powers of ds
    table = [runs]
    for m in range(1, levels):
        prev = table[-1]
        fac = 2.0 ** m
        table.append([(fac * prev[i + 1] - prev[i]) / (fac - 1) for i in range(len(prev) - 1)])
    out = Field(u0.grid, table[-1][0])
    if full:
        return DuhamelResult(out, sum(d["iterations"] for d in info),
                             max(d["contraction"] for d in info), info[-1]["trace"], info)
    return out


# ---------------------------------------------------------------------------
# bound checks


EUCLID = "euclid"
TORUS = "torus"


@dataclass
class BoundReport:
    ratio_min: float
    ratio_max: float
    geometry: str
    k: int
    grid: dict
    refined: tuple
    drift: float
    constants: dict
    passed: bool

    def as_dict(self) -> dict:
        return {
            "ratio_min": self.ratio_min,
            "ratio_max": self.ratio_max,
            "geometry": self.geometry,
            "k": self.k,
            "grid": self.grid,
            "refined": list(self.refined),
            "drift": self.drift,
            "constants": self.constants,
            "pass": self.passed,
        }


DRIFT_LIMIT = 0.10


def _kk(k: int) -> float:
    return 1.0 if k == 0 else float(k) ** k


def euclid_ratios(params: KernelParams, k: int, ts, dists, spec: Optional[QuadratureSpec] = None) -> np.ndarray:
    """``|d_t^k p| t^{k-1} (t^{1/a} + dist)^{d+a} / k^k`` on the product grid."""
    a, d = params.alpha, params.dim
    spec = spec or QuadratureSpec(tol=1e-9, abs_tol=1e-300)
    out = np.empty((len(ts), len(dists)))
    for i, t in enumerate(ts):
        for j, r in enumerate(dists):
            v = eval_time_deriv(KernelQuery(params, float(t), float(r), k=k), spec)
            out[i, j] = abs(v) * t ** (k - 1) * (t ** (1 / a) + r) ** (d + a) / _kk(k)
    return out


def gaussian_euclid_ratios(k: int, ts, dists, d: int = 1) -> np.ndarray:
    """Same ratio for the Gaussian (alpha = 2) from its closed form (k = 0 only)."""
    if k != 0:
        raise DomainError("the Gaussian control is provided for k = 0")
    T, R = np.meshgrid(np.asarray(ts, float), np.asarray(dists, float), indexing="ij")
    p = (4 * np.pi * T) ** (-d / 2) * np.exp(-R ** 2 / (4 * T))
    return p / T * (np.sqrt(T) + R) ** (d + 2)


def torus_kernel_deriv(alpha: float, k: int, t, x, modes: int) -> np.ndarray:
    """d_t^k of the 2 pi-periodic kernel (1/2pi) sum_n exp(-t|n|^a) e^{inx}."""
    t = np.asarray(t, float)
    x = np.asarray(x, float)
    n = np.arange(1, modes + 1, dtype=float)
    lam = n ** alpha
    out = np.full(np.broadcast_shapes(t.shape, x.shape), 1.0 if k == 0 else 0.0)
    T, X = np.broadcast_arrays(t, x)
    flatT, flatX = T.ravel(), X.ravel()
    acc = np.zeros(flatT.size)
    for start in range(0, modes, 4096):
        ln, ll = n[start:start + 4096], lam[start:start + 4096]
        w = (-ll[:, None]) ** k * np.exp(-flatT[None, :] * ll[:, None])
        acc += 2 * np.sum(w * np.cos(ln[:, None] * flatX[None, :]), axis=0)
    return (out + acc.reshape(T.shape)) / (2 * np.pi)


def torus_modes(alpha: float, k: int, t_min: float, drop: float = 40.0) -> int:
    """Mode cutoff making the neglected sum relatively below exp(-drop)."""
    M = 8
    while t_min * M ** alpha - alpha * k * math.log(M) < drop:
        M *= 2
    return M


def torus_ratios(alpha: float, k: int, ts, dists, modes: int) -> np.ndarray:
    """``|d_t^k p| t^{k-1} (dist^a + t) |B(dist + t^{1/a})| / k!``, |B(r)| = min(2r, 2pi)."""
    T, R = np.meshgrid(np.asarray(ts, float), np.asarray(dists, float), indexing="ij")
    v = np.abs(torus_kernel_deriv(alpha, k, T, R, modes))
    ball = np.minimum(2 * (R + T ** (1 / alpha)), 2 * np.pi)
    return v * T ** (k - 1) * (R ** alpha + T) * ball / math.factorial(k)


def default_bound_grid(geometry: str, n: int = 24, t_min: float = 0.05):
    ts = np.geomspace(t_min, 1.0, n)
    if geometry == TORUS:
        return ts, np.linspace(0.0, np.pi, n)
    # the distance grid contains the time grid so that dist = t is probed
    return ts, np.unique(np.concatenate([np.linspace(0.0, 5.0, n), ts]))


def _extremes(r: np.ndarray):
    return float(np.min(r)), float(np.max(r))


def bound_check(params: KernelParams, geometry: str = EUCLID, k: int = 0, ts=None, dists=None,
                n: int = 24, spec: Optional[QuadratureSpec] = None, gaussian: bool = False) -> BoundReport:
    """Min/max of the dimensionless kernel ratio and its stability under refinement.

    Euclidean refinement doubles the grid density and extends the time range
    down by a decade (probing ten-times larger dist / t^{1/alpha}); torus
    refinement doubles the mode cutoff. For k = 0 (a two-sided bound) both
    ends must be stable; for k >= 1 (an upper bound) only ``ratio_max``.
    """
    if k < 0:
        raise DomainError("k must be non-negative")
    a = params.alpha
    if ts is None or dists is None:
        ts0, ds0 = default_bound_grid(geometry, n)
        ts = ts0 if ts is None else np.asarray(ts, float)
        dists = ds0 if dists is None else np.asarray(dists, float)
    ts = np.asarray(ts, float)
    dists = np.asarray(dists, float)
    if np.any(ts <= 0) or np.any(ts > 1):
        raise DomainError("times must lie in (0, 1]")
    if geometry == EUCLID:
        def run(tg, dg):
            if gaussian or a == 2.0:
                return gaussian_euclid_ratios(k, tg, dg, params.dim)
            return euclid_ratios(params, k, tg, dg, spec)

        base = run(ts, dists)
        ts_f = np.geomspace(ts.min() / 10, ts.max(), 2 * ts.size)
        ds_f = np.unique(np.concatenate([np.linspace(dists.min(), dists.max(), 2 * dists.size), ts_f, dists]))
        fine = run(ts_f, ds_f)
        grid = {"t": [float(ts.min()), float(ts.max()), int(ts.size)],
                "dist": [float(dists.min()), float(dists.max()), int(dists.size)]}
    elif geometry == TORUS:
        if params.dim != 1:
            raise UnsupportedRouteError("the torus instance is one-dimensional")
        M = torus_modes(a, k, float(ts.min()))
        base = torus_ratios(a, k, ts, dists, M)
        fine = torus_ratios(a, k, ts, dists, 2 * M)
        grid = {"t": [float(ts.min()), float(ts.max()), int(ts.size)],
                "dist": [float(dists.min()), float(dists.max()), int(dists.size)], "modes": M}
    else:
        raise DomainError(f"unknown geometry {geometry!r}")
    lo, hi = _extremes(base)
    lo_f, hi_f = _extremes(fine)
    drift_hi = abs(hi_f / hi - 1) if hi > 0 else math.inf
    drift_lo = abs(lo_f / lo - 1) if lo > 0 else math.inf
    drift = max(drift_hi, drift_lo) if k == 0 else drift_hi
    passed = bool(lo > 0 and np.isfinite(hi) and drift < DRIFT_LIMIT)
    constants = {"C1": lo, "C2": hi}
    if k > 0:
        constants["C"] = hi ** (1.0 / (k + 1)) if hi > 0 else 0.0
    return BoundReport(lo, hi, geometry, k, grid, (lo_f, hi_f), drift, constants, passed)


def derivative_shape_constant(params: KernelParams, ks: Sequence[int], ts: Sequence[float], dists: Sequence[float],
                              spec: Optional[QuadratureSpec] = None):
    """Per-k constants ``C_k = max (|d_t^k p| t^{k-1} (t^{1/a}+r)^{d+a} / k^k)^{1/(k+1)}``.

    A single ``C = max_k C_k`` makes ``ratio <= C^{k+1} k^k`` hold on the grid.
    """
    ck = {}
    for k in ks:
        r = euclid_ratios(params, int(k), ts, dists, spec)
        ck[int(k)] = float(np.max(r)) ** (1.0 / (k + 1))
    return max(ck.values()), ck
