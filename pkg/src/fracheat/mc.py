"""Monte Carlo check of the subordination identity.

A position with law p(t, .) is a Brownian motion (generator Delta) run for
the random time ``t^{2/alpha} S``, where S is one-sided stable of index
alpha/2 with Laplace transform ``exp(-lambda^{alpha/2})``.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import stats

from .core import DomainError, InsufficientDataError, KernelParams
from .kernel import KernelQuery, QuadratureSpec, eval_kernel
from .quadrature import gauss_legendre

CHUNK = 1 << 16


@dataclass(frozen=True)
class SamplerConfig:
    """Everything that determines a sample stream.

    Samples are generated in fixed chunks of ``chunk`` draws; chunk ``c`` uses
    a Philox stream keyed by ``(seed, c)``, so the output does not depend on
    ``workers``.
    """

    alpha: float
    t: float = 1.0
    dim: int = 1
    N: int = 10 ** 6
    seed: int = 0
    workers: int = 1
    chunk: int = CHUNK

    def __post_init__(self):
        if not (0.0 < self.alpha <= 2.0):
            raise DomainError("alpha must lie in (0, 2]")
        if not self.t > 0:
            raise DomainError("t must be positive")
        if self.dim < 1 or self.N < 0 or self.chunk < 1 or self.workers < 1:
            raise DomainError("invalid sampler configuration")
        if not (0 <= self.seed < 2 ** 64):
            raise DomainError("seed must be an unsigned 64-bit integer")


def chunk_generator(seed: int, index: int) -> np.random.Generator:
    """Counter-based stream for one chunk: Philox keyed by (seed, index)."""
    key = np.array([seed, index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def kanter(beta: float, u: np.ndarray, e: np.ndarray) -> np.ndarray:
    """Kanter's transform of a uniform on (0,1) and a unit exponential.

    Returns a positive stable variable of index ``beta`` in (0,1) with Laplace
    transform ``exp(-lambda^beta)``.
    """
    pu = np.pi * u
    a = (np.sin(beta * pu) / np.sin(pu)) ** (1.0 / (1.0 - beta)) * (
        np.sin((1.0 - beta) * pu) / np.sin(beta * pu))
    return (a / e) ** ((1.0 - beta) / beta)


def _chunk_sizes(N: int, chunk: int):
    full, rest = divmod(N, chunk)
    return [chunk] * full + ([rest] if rest else [])


def _draw(alpha, seed, index, n, dim=0):
    """Subordinator values and (optionally) normals from one chunk stream, in a fixed order."""
    rng = chunk_generator(seed, index)
    u = rng.random(n)
    e = rng.standard_exponential(n)
    z = rng.standard_normal((n, dim)) if dim else None
    if alpha == 2.0:
        return np.ones(n), z
    # guard the open interval (0,1)
    u = np.where(u == 0.0, np.nextafter(0.0, 1.0), u)
    return kanter(alpha / 2, u, e), z


def _subordinator_chunk(args):
    alpha, seed, index, n = args
    return _draw(alpha, seed, index, n)[0]


def _position_chunk(args):
    alpha, t, dim, seed, index, n = args
    s, z = _draw(alpha, seed, index, n, dim)
    return np.sqrt(2.0 * t ** (2.0 / alpha) * s)[:, None] * z


def _map(func, tasks, workers):
    if workers <= 1 or len(tasks) <= 1:
        return [func(a) for a in tasks]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(func, tasks))


def sample_subordinator(alpha: float, N: int, seed: int = 0, workers: int = 1, chunk: int = CHUNK) -> np.ndarray:
    """N i.i.d. draws with Laplace transform ``exp(-lambda^{alpha/2})`` (all ones at alpha = 2)."""
    cfg = SamplerConfig(alpha, 1.0, 1, N, seed, workers, chunk)
    tasks = [(cfg.alpha, cfg.seed, i, n) for i, n in enumerate(_chunk_sizes(N, chunk))]
    parts = _map(_subordinator_chunk, tasks, workers)
    return np.concatenate(parts) if parts else np.empty(0)


def sample_position(cfg: SamplerConfig) -> np.ndarray:
    """``X = sqrt(2 t^{2/alpha} S) Z`` with Z standard normal in R^dim; shape (N, dim)."""
    tasks = [(cfg.alpha, cfg.t, cfg.dim, cfg.seed, i, n) for i, n in enumerate(_chunk_sizes(cfg.N, cfg.chunk))]
    parts = _map(_position_chunk, tasks, cfg.workers)
    return np.concatenate(parts) if parts else np.empty((0, cfg.dim))


# ---------------------------------------------------------------------------
# statistics


@dataclass
class HistogramResult:
    chi2: float
    p_value: float
    dof: int
    max_deviation: float
    edges: np.ndarray
    observed: np.ndarray
    expected: np.ndarray
    merged: int = 0
    deviations: np.ndarray = field(default=None)

    def as_dict(self) -> dict:
        return {"chi2": self.chi2, "p_value": self.p_value, "dof": self.dof,
                "max_deviation": self.max_deviation, "merged_bins": self.merged}


def kernel_density(alpha: float, t: float = 1.0, spec: Optional[QuadratureSpec] = None) -> Callable:
    """Vectorised one-dimensional density x -> p(t, x) from the Fourier route."""
    spec = spec or QuadratureSpec(tol=1e-10)
    params = KernelParams(alpha, 1)
    cache = {}

    def density(x):
        x = np.asarray(x, float)
        out = np.empty(x.size)
        for i, r in enumerate(np.abs(x).ravel()):
            key = float(r)
            if key not in cache:
                cache[key] = eval_kernel(KernelQuery(params, t, key), spec)
            out[i] = cache[key]
        return out.reshape(x.shape)

    return density


def bin_probabilities(density: Callable, edges: np.ndarray, order: int = 16) -> np.ndarray:
    """Probabilities of the bins ``edges`` plus the two outer half-lines (first and last entries).

    The outer mass is one minus the inner mass, so the density must be normalised.
    """
    x, w = gauss_legendre(order)
    a, b = edges[:-1], edges[1:]
    nodes = 0.5 * (b - a)[:, None] * x[None, :] + 0.5 * (a + b)[:, None]
    inner = 0.5 * (b - a) * (density(nodes) @ w)
    outside = max(1.0 - inner.sum(), 0.0)
    # split the outside mass between the half-lines by symmetry of the kernel
    return np.concatenate([[0.5 * outside], inner, [0.5 * outside]])


def _merge(obs, exp, min_expected):
    obs, exp = list(obs), list(exp)
    merged = 0
    i = 0
    while i < len(exp) and len(exp) > 1:
        if exp[i] < min_expected:
            j = i + 1 if i + 1 < len(exp) else i - 1
            exp[j] += exp[i]
            obs[j] += obs[i]
            del exp[i], obs[i]
            merged += 1
            i = max(0, min(i, j) - 1) if j < i else i
        else:
            i += 1
    return np.array(obs, float), np.array(exp, float), merged


def histogram_compare(samples, density: Callable, bins=50, lo: float = -8.0, hi: float = 8.0,
                      min_expected: float = 20.0, probabilities: Optional[np.ndarray] = None) -> HistogramResult:
    """Chi-square test of one-dimensional samples against ``density``.

    The cells are ``bins`` equal bins on [lo, hi] and the two outer half-lines.
    Cells with fewer than ``min_expected`` expected counts are merged with a
    neighbour and the number of merges is reported.
    """
    samples = np.asarray(samples, float).ravel()
    N = samples.size
    if N == 0:
        raise InsufficientDataError("no samples")
    edges = np.linspace(lo, hi, bins + 1) if np.isscalar(bins) else np.asarray(bins, float)
    probs = bin_probabilities(density, edges) if probabilities is None else np.asarray(probabilities, float)
    idx = np.searchsorted(edges, samples, side="right")
    observed = np.bincount(idx, minlength=edges.size + 1).astype(float)
    expected = N * probs
    obs, exp, merged = _merge(observed, expected, min_expected)
    if exp.size < 2:
        raise InsufficientDataError(f"too few samples ({N}) for a chi-square test")
    dev = (obs - exp) / np.sqrt(exp)
    chi2 = float(np.sum(dev ** 2))
    dof = exp.size - 1
    return HistogramResult(chi2, float(stats.chi2.sf(chi2, dof)), dof, float(np.max(np.abs(dev))),
                           edges, observed, expected, merged, dev)


@dataclass
class TailFit:
    slope: float
    intercept: float
    radii: np.ndarray
    survival: np.ndarray


def tail_slope(samples, q_hi: float = 1e-2, q_lo: float = 1e-4, points: int = 16) -> TailFit:
    """Log-log regression of the empirical P(|X| > R) over the survival band [q_lo, q_hi]."""
    r = np.sort(np.abs(np.asarray(samples, float).ravel()))
    N = r.size
    if N * q_lo < 50:
        raise InsufficientDataError(f"{N} samples leave fewer than 50 in the tail band")
    qs = np.geomspace(q_hi, q_lo, points)
    radii = np.quantile(r, 1.0 - qs)
    surv = (N - np.searchsorted(r, radii, side="right")) / N
    slope, intercept = np.polyfit(np.log(radii), np.log(surv), 1)
    return TailFit(float(slope), float(intercept), radii, surv)


def laplace_check(s, lam: float = 1.0):
    """Sample mean of exp(-lam S) and its standard error."""
    v = np.exp(-lam * np.asarray(s, float))
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))
