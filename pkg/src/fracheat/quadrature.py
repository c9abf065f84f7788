"""Quadrature building blocks: tanh-sinh, composite Gauss-Legendre panels,
Wynn's epsilon extrapolation and an extended-precision panel rule."""

from __future__ import annotations

from functools import lru_cache

import mpmath
import numpy as np

_HALF_PI = np.pi / 2


@lru_cache(maxsize=32)
def tanh_sinh_rule(h: float = 1 / 32, tmax: float = 3.2):
    """Nodes on (-1, 1) with weights and endpoint distances.

    Returns ``(x, w, dist_lo, dist_hi)`` where ``dist_lo = 1 + x`` and
    ``dist_hi = 1 - x`` are computed without cancellation, so integrands
    singular at an endpoint can be evaluated accurately there.
    """
    t = np.arange(-tmax, tmax + h / 2, h)
    s = _HALF_PI * np.sinh(t)
    x = np.tanh(s)
    w = h * _HALF_PI * np.cosh(t) / np.cosh(s) ** 2
    # 1 - tanh(s) = 2 / (exp(2s) + 1)
    dist_hi = 2.0 / (np.exp(2 * s) + 1.0)
    dist_lo = 2.0 / (np.exp(-2 * s) + 1.0)
    keep = (dist_hi > 0) & (dist_lo > 0) & (w > 0)
    return x[keep], w[keep], dist_lo[keep], dist_hi[keep]


def tanh_sinh(f, a: float, b: float, h: float = 1 / 32, with_distances: bool = False):
    """Integrate ``f`` over [a, b] with the double-exponential rule.

    With ``with_distances`` the integrand is called as ``f(x, x - a, b - x)``.
    Vectorised: ``f`` may return shape ``(len(x),) + extra``.
    """
    x, w, lo, hi = tanh_sinh_rule(h)
    half = 0.5 * (b - a)
    u = a + half * (1 + x)
    if with_distances:
        vals = f(u, half * lo, half * hi)
    else:
        vals = f(u)
    vals = np.asarray(vals)
    return half * np.tensordot(w, vals, axes=(0, 0))


@lru_cache(maxsize=16)
def gauss_legendre(order: int):
    return np.polynomial.legendre.leggauss(order)


def panel_rule(edges, order: int = 20):
    """Composite Gauss-Legendre nodes/weights over consecutive ``edges``."""
    edges = np.asarray(edges, float)
    g, gw = gauss_legendre(order)
    a, b = edges[:-1, None], edges[1:, None]
    half = 0.5 * (b - a)
    x = (a + half * (1 + g[None, :])).ravel()
    w = (half * gw[None, :]).ravel()
    return x, w


def graded_edges(a: float, b: float, ratio: float = 0.25, levels: int = 24):
    """Edges geometrically refined toward ``a`` (for endpoint singularities)."""
    span = b - a
    inner = a + span * ratio ** np.arange(levels, 0, -1)
    return np.concatenate([[a], inner, [b]])


def wynn_epsilon(partial_sums):
    """Wynn's epsilon algorithm; returns (limit, error estimate)."""
    s = [float(v) for v in partial_sums]
    n = len(s)
    if n < 3:
        return s[-1], abs(s[-1] - s[-2]) if n == 2 else np.inf
    prev = [0.0] * (n + 1)
    cur = list(s)
    estimates = []
    col = 0
    while len(cur) > 1:
        nxt = []
        for i in range(len(cur) - 1):
            diff = cur[i + 1] - cur[i]
            if diff == 0:
                nxt.append(np.inf)
            else:
                nxt.append(prev[i + 1] + 1.0 / diff)
        prev, cur = cur, nxt
        col += 1
        if col % 2 == 0 and cur and np.isfinite(cur[-1]):
            estimates.append(cur[-1])
    if not estimates:
        return s[-1], abs(s[-1] - s[-2])
    if len(estimates) == 1:
        return estimates[-1], abs(estimates[-1] - s[-1])
    if len(estimates) == 2:
        return estimates[-1], abs(estimates[-1] - estimates[-2])
    # deep columns rest on few terms and can break down in rounding: take the
    # estimate that agrees best with its two predecessors
    best, err = estimates[-1], np.inf
    for i in range(2, len(estimates)):
        e = max(abs(estimates[i] - estimates[i - 1]), abs(estimates[i] - estimates[i - 2]))
        if e <= err:
            best, err = estimates[i], e
    return best, err


# ---------------------------------------------------------------------------
# extended precision


@lru_cache(maxsize=16)
def _mp_gauss_legendre(order: int, dps: int):
    with mpmath.workdps(dps + 10):
        nodes, weights = [], []
        for k in range(1, order + 1):
            x = mpmath.cos(mpmath.pi * (k - mpmath.mpf(1) / 4) / (order + mpmath.mpf(1) / 2))
            for _ in range(100):
                p0, p1 = mpmath.mpf(1), x
                for j in range(2, order + 1):
                    p0, p1 = p1, ((2 * j - 1) * x * p1 - (j - 1) * p0) / j
                dp = order * (x * p1 - p0) / (x * x - 1)
                dx = p1 / dp
                x -= dx
                if abs(dx) < mpmath.mpf(10) ** (-(dps + 8)):
                    break
            p0, p1 = mpmath.mpf(1), x
            for j in range(2, order + 1):
                p0, p1 = p1, ((2 * j - 1) * x * p1 - (j - 1) * p0) / j
            dp = order * (x * p1 - p0) / (x * x - 1)
            nodes.append(x)
            weights.append(2 / ((1 - x * x) * dp * dp))
    return tuple(nodes), tuple(weights)


def mp_panel_quad(f, edges, order: int = 20, dps: int = 40):
    """Composite Gauss-Legendre in mpmath at ``dps`` digits.

    Returns ``(value, abs_mass)`` where ``abs_mass`` is the integral of |f|
    (used to judge cancellation).
    """
    nodes, weights = _mp_gauss_legendre(order, dps)
    total = mpmath.mpf(0)
    mass = mpmath.mpf(0)
    with mpmath.workdps(dps):
        edges = [mpmath.mpf(e) for e in edges]
        for a, b in zip(edges[:-1], edges[1:]):
            half = (b - a) / 2
            mid = (a + b) / 2
            for x, w in zip(nodes, weights):
                v = f(mid + half * x)
                total += w * half * v
                mass += w * half * abs(v)
    return total, mass
