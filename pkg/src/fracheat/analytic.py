"""Time-analyticity tools: Taylor coefficients, the coefficient-growth gate,
series evaluation, radius and Gevrey-order estimates, backward solves."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .core import (
    DomainError,
    Field,
    FracHeatError,
    Grid,
    GrowthWeight,
    InsufficientDataError,
    KernelParams,
    field_norms,
)
from .operator import OperatorHandle, apply_generator

FORWARD = "forward"
BACKWARD = "backward"


class CoefficientError(FracHeatError):
    """Applying the operator failed while building coefficient ``j``."""

    def __init__(self, j: int, cause: Exception):
        super().__init__(f"operator application failed at j={j}: {cause}")
        self.j = j
        self.cause = cause


class BackwardIllPosedError(FracHeatError):
    """The data fails the coefficient-growth gate; carries the gate report."""

    def __init__(self, message: str, report: "GateReport"):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class TaylorSeries:
    """Coefficients ``a_j`` of ``u(t0 + s) = sum_j a_j s^j / j!``.

    ``a_{j+1} = G a_j`` (forward) or ``-G a_j`` (backward).
    """

    t0: float
    coeffs: tuple
    sign: str
    handle: OperatorHandle
    weight: GrowthWeight

    @property
    def J(self) -> int:
        return len(self.coeffs) - 1

    @property
    def grid(self) -> Grid:
        return self.coeffs[0].grid

    @property
    def sup_norms(self) -> np.ndarray:
        """Weighted sup-norms of the coefficients (recomputed on demand)."""
        return np.array([field_norms(c, self.weight).weighted for c in self.coeffs])

    def at(self, x) -> np.ndarray:
        """Coefficient values ``a_j(x)`` at a node index (int/tuple) or coordinate."""
        idx = _node_index(self.grid, x)
        return np.array([c.values[idx] for c in self.coeffs])


def _node_index(grid: Grid, x):
    if isinstance(x, (int, np.integer)):
        return (int(x),) if grid.dim == 1 else np.unravel_index(int(x), grid.shape)
    if isinstance(x, tuple) and all(isinstance(v, (int, np.integer)) for v in x):
        return x
    pt = np.atleast_1d(np.asarray(x, float))
    ax = grid.axis()
    if grid.periodic:
        dist = np.abs((ax[:, None] - pt[None, :] + np.pi) % (2 * np.pi) - np.pi)
    else:
        dist = np.abs(ax[:, None] - pt[None, :])
    return tuple(int(i) for i in np.argmin(dist, axis=0))


def taylor_coeffs(a0: Field, G: OperatorHandle, J: int, sign: str = FORWARD,
                  weight: Optional[GrowthWeight] = None, t0: float = 0.0) -> TaylorSeries:
    """Build ``a_0 .. a_J`` by repeated application of ``+-G``."""
    if J < 1:
        raise DomainError("need J >= 1")
    if sign not in (FORWARD, BACKWARD):
        raise DomainError(f"sign must be {FORWARD!r} or {BACKWARD!r}")
    if a0.grid != G.grid:
        raise DomainError("data and operator live on different grids")
    w = weight or GrowthWeight(G.params.alpha)
    s = 1.0 if sign == FORWARD else -1.0
    if G.route == "spectral":
        # mode-wise: a_j = ifft((s * symbol)^j * fft(a0)), one transform per coefficient
        spec = _clean_spectrum(a0.values)
        mult = s * G.symbol()
        coeffs = [a0] + [Field.from_spectrum(a0.grid, spec * mult ** j) for j in range(1, J + 1)]
        return TaylorSeries(t0, tuple(coeffs), sign, G, w)
    coeffs = [a0]
    for j in range(J):
        try:
            nxt = apply_generator(coeffs[-1], G)
        except Exception as exc:
            raise CoefficientError(j + 1, exc) from exc
        coeffs.append(nxt * s)
    return TaylorSeries(t0, tuple(coeffs), sign, G, w)


ROUNDOFF_FLOOR = 64 * np.finfo(float).eps


def _clean_spectrum(values: np.ndarray) -> np.ndarray:
    """Fourier coefficients with modes below the round-off floor set to zero.

    Repeated application of |n|^alpha amplifies rounding noise in empty modes
    by |n|^{alpha j}; such modes carry no information and are removed.
    """
    spec = np.fft.fftn(values)
    top = np.max(np.abs(spec))
    if top > 0:
        spec[np.abs(spec) < ROUNDOFF_FLOOR * top] = 0.0
    return spec


# ---------------------------------------------------------------------------
# growth gate


@dataclass
class GateReport:
    passed: bool
    A_est: float
    ratios: np.ndarray
    refinement: dict  # grid size -> A_est
    bounded: bool
    growth: float

    def as_dict(self) -> dict:
        return {
            "pass": bool(self.passed),
            "A_est": float(self.A_est),
            "ratios": [float(r) for r in self.ratios],
            "refinement": {int(k): float(v) for k, v in self.refinement.items()},
            "bounded": bool(self.bounded),
            "growth": float(self.growth),
        }


GROWTH_LIMIT = 1.25


def gate_ratios(sup_norms: Sequence[float]) -> np.ndarray:
    """rho_j = (|a_j| / j^j)^{1/(j+1)} with 0^0 = 1."""
    s = np.asarray(sup_norms, float)
    j = np.arange(s.size, dtype=float)
    with np.errstate(divide="ignore"):
        logs = np.where(s > 0, np.log(np.where(s > 0, s, 1.0)), -np.inf)
    jlogj = np.where(j > 0, j * np.log(np.where(j > 0, j, 1.0)), 0.0)
    return np.exp((logs - jlogj) / (j + 1))


def coarsen(f: Field) -> Field:
    """Band-limit ``f`` to modes below the half-resolution Nyquist and sample there."""
    g = f.grid
    coarse = Grid(g.n // 2, g.dim, g.topology, g.extent)
    if not g.periodic:
        return f.restrict(2)
    spec = np.fft.fftn(f.values)
    k = np.abs(g.wavenumbers())
    keep = k < g.n // 4
    for ax in range(g.dim):
        shape = [1] * g.dim
        shape[ax] = g.n
        spec = spec * keep.reshape(shape)
    idx = np.concatenate([np.arange(g.n // 4), np.arange(g.n - g.n // 4, g.n)])
    small = spec[np.ix_(*([idx] * g.dim))]
    # the coarse array length is n/2; place the kept modes in FFT order
    out = np.zeros((coarse.n,) * g.dim, complex)
    cidx = np.concatenate([np.arange(g.n // 4), np.arange(coarse.n - g.n // 4, coarse.n)])
    out[np.ix_(*([cidx] * g.dim))] = small
    vals = np.real(np.fft.ifftn(out)) * (coarse.n / g.n) ** g.dim
    return Field(coarse, vals)


def _rebuild(series: TaylorSeries, a0: Field) -> TaylorSeries:
    h = series.handle
    G = OperatorHandle(h.params, a0.grid, h.route, h.constant, h.tail_periods, h.growth_constant)
    return taylor_coeffs(a0, G, series.J, series.sign, series.weight, series.t0)


def growth_gate(s: TaylorSeries, w: Optional[GrowthWeight] = None,
                refined: Optional[TaylorSeries] = None) -> GateReport:
    """Coefficient-growth gate ``|a_j| <= A^{j+1} j^j``.

    Passes when the ratios stay bounded over the tested range and ``A_est``
    grows by less than 25% under one grid refinement. Without ``refined`` the
    comparison is against the same data band-limited to half resolution.
    """
    if s.J < 8:
        raise InsufficientDataError("the gate needs at least 8 coefficients beyond a_0")
    if w is not None and w != s.weight:
        s = TaylorSeries(s.t0, s.coeffs, s.sign, s.handle, w)
    if refined is None:
        lo, hi = _rebuild(s, coarsen(s.coeffs[0])), s
    else:
        if w is not None:
            refined = TaylorSeries(refined.t0, refined.coeffs, refined.sign, refined.handle, w)
        lo, hi = s, refined
    ratios = gate_ratios(hi.sup_norms)
    A_hi = float(np.max(ratios))
    A_lo = float(np.max(gate_ratios(lo.sup_norms)))
    half = ratios.size // 2
    finite = bool(np.all(np.isfinite(ratios)))
    head = float(np.max(ratios[:half])) if half else 0.0
    bounded = finite and float(np.max(ratios[half:])) <= GROWTH_LIMIT * max(head, 1e-300)
    if A_lo == 0.0:
        growth = 1.0 if A_hi == 0.0 else math.inf
    else:
        growth = A_hi / A_lo
    passed = bounded and growth < GROWTH_LIMIT
    refinement = {lo.grid.n: A_lo, hi.grid.n: A_hi}
    return GateReport(passed, A_hi, ratios, refinement, bounded, growth)


@dataclass
class RefinementTrace:
    """A_est over a sequence of grid doublings and the extrapolated growth exponent.

    With ``rho_j ~ N^{(alpha j - 1)/(j + 1)}`` for data whose top modes dominate,
    ``log2`` of the per-doubling growth is ``exponent - (exponent + 1)/(j* + 1)``
    with ``j*`` the argmax; a line fit in ``1/(j* + 1)`` recovers ``exponent``.
    """

    sizes: list
    A_est: np.ndarray
    argmax: np.ndarray
    growth: np.ndarray
    exponent: float
    slope: float


def refinement_trace(make_data: Callable[[Grid], Field], params: KernelParams, sizes: Sequence[int],
                     J: int = 40, weight: Optional[GrowthWeight] = None) -> RefinementTrace:
    """Run the gate ratios for ``make_data`` on each torus size in ``sizes`` (successive doublings)."""
    sizes = list(sizes)
    if len(sizes) < 3 or any(b != 2 * a for a, b in zip(sizes, sizes[1:])):
        raise DomainError("sizes must be at least three successive doublings")
    A, arg = [], []
    for n in sizes:
        g = Grid.torus(n, params.dim)
        r = gate_ratios(taylor_coeffs(make_data(g), OperatorHandle(params, g), J, BACKWARD, weight).sup_norms)
        A.append(float(np.max(r)))
        arg.append(int(np.argmax(r)))
    A, arg = np.array(A), np.array(arg)
    growth = A[1:] / A[:-1]
    jbar = 0.5 * (arg[1:] + arg[:-1])
    slope, exponent = np.polyfit(1.0 / (jbar + 1.0), np.log2(growth), 1)
    return RefinementTrace(sizes, A, arg, growth, float(exponent), float(slope))


# ---------------------------------------------------------------------------
# evaluation, radius, Gevrey order


@dataclass
class SeriesValue:
    value: object  # Field or float
    truncation_bound: float


def evaluate_series(s: TaylorSeries, dt: float, x=None, A_est: Optional[float] = None) -> SeriesValue:
    """Sum ``a_j dt^j / j!``; the bound is the first omitted term under the growth model.

    With ``x`` the value at that point is returned, otherwise the whole field.
    """
    if A_est is None:
        A_est = float(np.max(gate_ratios(s.sup_norms)))
    J = s.J
    if A_est > 0 and abs(dt) >= 1.0 / (math.e * A_est):
        warnings.warn(f"|dt| = {abs(dt)} is at or beyond the estimated radius {1 / (math.e * A_est):.3g}",
                      RuntimeWarning, stacklevel=2)
    if dt == 0:
        total = s.coeffs[0]
    else:
        total = s.coeffs[0]
        term = 1.0
        for j in range(1, J + 1):
            term *= dt / j
            total = total + s.coeffs[j] * term
    n = J + 1
    if A_est > 0 and dt != 0:
        logb = (n + 1) * math.log(A_est) + n * math.log(n) + n * math.log(abs(dt)) - math.lgamma(n + 1)
        bound = math.exp(min(logb, 700.0))
    else:
        bound = 0.0
    if x is not None:
        return SeriesValue(float(total.values[_node_index(s.grid, x)]), bound)
    return SeriesValue(total, bound)


RADIUS_INFINITE = math.inf


def radius_estimate(s_or_coeffs, x=None, zero_tol: float = 1e-13) -> float:
    """Cauchy-Hadamard radius from a line fit of ``log|a_j/j!|`` over the tail half.

    Accepts a :class:`TaylorSeries` (with a point ``x``) or a plain sequence of
    derivative values ``a_j``. Zero coefficients are skipped. Returns ``inf``
    when the tail is all zero, when the fitted slope is below ``log(eps)``, or
    when the decay is faster than geometric (the slope keeps steepening).
    """
    if isinstance(s_or_coeffs, TaylorSeries):
        a = s_or_coeffs.at(x)
    else:
        a = np.asarray(s_or_coeffs, float)
    J = a.size - 1
    if J < 12:
        raise InsufficientDataError("radius estimation needs J >= 12")
    j = np.arange(J + 1)
    with np.errstate(divide="ignore"):
        logc = np.log(np.abs(a)) - np.array([math.lgamma(k + 1) for k in j])
    scale = np.max(np.abs(a))
    if scale == 0:
        return RADIUS_INFINITE
    # discard coefficients that are zero up to rounding relative to the sequence
    mag = np.log(np.abs(a) + 1e-300)
    env = np.maximum.accumulate(mag)
    usable = np.isfinite(logc) & (mag > env + math.log(zero_tol))
    tail = j >= J // 2
    sel = usable & tail
    if sel.sum() < 2:
        return RADIUS_INFINITE
    slope = np.polyfit(j[sel], logc[sel], 1)[0]
    if slope <= math.log(np.finfo(float).eps):
        return RADIUS_INFINITE
    # faster-than-geometric decay: compare the two halves of the tail
    mid = (J // 2 + J) / 2
    first, second = sel & (j <= mid), sel & (j >= mid)
    if first.sum() >= 2 and second.sum() >= 2:
        s1 = np.polyfit(j[first], logc[first], 1)[0]
        s2 = np.polyfit(j[second], logc[second], 1)[0]
        if s2 - s1 < -0.15:
            return RADIUS_INFINITE
    return float(math.exp(-slope))


@dataclass
class GevreyFit:
    sigma: float
    c_hat: float
    c0: float
    residual: float
    k_used: np.ndarray

    @property
    def k_range(self):
        return int(self.k_used.min()), int(self.k_used.max())


def gevrey_fit(d_k: Sequence[float], k_range: Optional[Sequence[int]] = None, floor: float = 0.0) -> GevreyFit:
    """Least-squares fit ``log d_k = sigma k log k + c_hat k + c0``.

    Entries ``<= floor`` (nonpositive by default) are dropped; at least eight
    must remain.
    """
    d = np.asarray(d_k, float)
    k = np.asarray(k_range if k_range is not None else np.arange(d.size), float)
    if k.shape != d.shape:
        raise DomainError("d_k and k_range differ in length")
    keep = np.isfinite(d) & (d > floor) & (k >= 1)
    if keep.sum() < 8:
        raise InsufficientDataError(f"only {int(keep.sum())} usable entries; the fit needs 8")
    kk, y = k[keep], np.log(d[keep])
    X = np.column_stack([kk * np.log(kk), kk, np.ones_like(kk)])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = float(np.sqrt(np.mean((X @ coef - y) ** 2)))
    return GevreyFit(float(coef[0]), float(coef[1]), float(coef[2]), resid, kk.astype(int))


def time_derivative_sequence(alpha: float, x: float = 1.0, kmax: int = 20, t: float = 0.0,
                             window: Optional[Sequence[float]] = None, spec=None):
    """``(k, d_k)`` with ``d_k = max_{t in window} |d_t^k p(t, x)|`` in d = 1.

    The window defaults to ``{t}``. At ``t = 0`` the contour route is used;
    values indistinguishable from zero (below ten times the quadrature error
    estimate) are reported as 0 so the fit drops them.
    """
    from .kernel import DEFAULT_SPEC, KernelQuery, eval_kernel_contour

    spec = spec or DEFAULT_SPEC
    ts = [t] if window is None else list(window)
    p = KernelParams(alpha, 1)
    ks = np.arange(1, kmax + 1)
    out = np.zeros(ks.size)
    for i, k in enumerate(ks):
        best = 0.0
        for tt in ts:
            res = eval_kernel_contour(KernelQuery(p, tt, abs(x), k=int(k)), spec, full=True)
            if abs(res.value) > 10 * res.error:
                best = max(best, abs(res.value))
        out[i] = best
    return ks, out


def space_derivative_sequence(alpha: float, t: float = 1.0, x: float = 0.0, kmax: int = 20,
                              even_only: bool = False, spec=None):
    """``(k, |d_x^k p(t, x)|)`` in d = 1 by the Fourier route."""
    from .kernel import DEFAULT_SPEC, KernelQuery, eval_space_deriv

    spec = spec or DEFAULT_SPEC
    p = KernelParams(alpha, 1)
    ks = np.arange(2 if even_only else 1, kmax + 1, 2 if even_only else 1)
    vals = []
    for k in ks:
        res = eval_space_deriv(KernelQuery(p, t, x=(x,), beta=(int(k),)), spec, full=True)
        vals.append(abs(res.value) if abs(res.value) > 10 * res.error else 0.0)
    return ks, np.array(vals)


# ---------------------------------------------------------------------------
# backward problem


@dataclass
class BackwardResult:
    field: Field
    A_est: float
    truncation_bound: float
    gate: GateReport

    @property
    def certificate(self) -> dict:
        return {"A_est": self.A_est, "truncation_bound": self.truncation_bound, "gate": self.gate.as_dict()}


def backward_solve(uT: Field, G: OperatorHandle, delta: float, J: int = 24,
                   weight: Optional[GrowthWeight] = None, refined: Optional[Field] = None) -> BackwardResult:
    """Recover ``u(T - delta)`` from ``u(T)`` by the backward Taylor series.

    Refuses with :class:`BackwardIllPosedError` when the growth gate fails.
    ``refined`` optionally supplies the same data sampled on a grid twice as
    fine; otherwise the gate compares against a half-resolution band-limit.
    """
    if delta < 0:
        raise DomainError("delta must be non-negative")
    s = taylor_coeffs(uT, G, J, BACKWARD, weight)
    ref_series = None
    if refined is not None:
        h = G
        Gf = OperatorHandle(h.params, refined.grid, h.route, h.constant, h.tail_periods, h.growth_constant)
        ref_series = taylor_coeffs(refined, Gf, J, BACKWARD, s.weight)
    gate = growth_gate(s, refined=ref_series)
    if not gate.passed:
        raise BackwardIllPosedError(
            f"coefficient growth gate failed (A_est={gate.A_est:.4g}, refinement growth {gate.growth:.3g})", gate)
    if delta == 0:
        return BackwardResult(uT, gate.A_est, 0.0, gate)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        val = evaluate_series(s, delta, A_est=gate.A_est)
    return BackwardResult(val.value, gate.A_est, val.truncation_bound, gate)
