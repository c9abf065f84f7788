"""Closed-form reference kernels: Gaussian (alpha=2), Poisson (alpha=1) and the Lévy-1/2 law.

All kernels use the probability normalisation (unit mass), i.e. the Fourier
convention ``p(t, x) = (2 pi)^{-d} int exp(-t|xi|^alpha) exp(i xi.x) dxi``.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import special

from .core import DomainError


def _radius(x, d):
    x = np.asarray(x, float)
    if d == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        return np.abs(x)
    return np.sqrt(np.sum(x ** 2, axis=-1))


def gaussian_kernel(t, x, d: int = 1):
    """(4 pi t)^{-d/2} exp(-|x|^2 / 4t); ``x`` is a point (or radius in 1-D)."""
    if np.any(np.asarray(t) <= 0):
        raise DomainError("gaussian_kernel needs t > 0")
    r = _radius(x, d)
    return (4 * np.pi * t) ** (-d / 2) * np.exp(-r ** 2 / (4 * t))


def gaussian_radial(t, r, d: int = 1):
    return gaussian_kernel(t, np.asarray(r, float), 1) * (4 * np.pi * t) ** (-(d - 1) / 2)


def poisson_constant(d: int) -> float:
    return math.gamma((d + 1) / 2) / math.pi ** ((d + 1) / 2)


def poisson_kernel(t, x, d: int = 1):
    """c_d t / (t^2 + |x|^2)^{(d+1)/2}, c_d = Gamma((d+1)/2) / pi^{(d+1)/2}."""
    if np.any(np.asarray(t) <= 0):
        raise DomainError("poisson_kernel needs t > 0")
    r = _radius(x, d)
    return poisson_constant(d) * t / (t ** 2 + r ** 2) ** ((d + 1) / 2)


def poisson_radial(t, r, d: int = 1):
    r = np.asarray(r, float)
    return poisson_constant(d) * t / (t ** 2 + r ** 2) ** ((d + 1) / 2)


def levy_half_density(s):
    """Density of the one-sided 1/2-stable law with Laplace transform exp(-sqrt(lambda))."""
    s = np.asarray(s, float)
    if np.any(s <= 0):
        raise DomainError("levy_half_density needs s > 0")
    return s ** -1.5 * np.exp(-0.25 / s) / (2 * math.sqrt(math.pi))


def levy_half_cdf(s):
    s = np.asarray(s, float)
    out = np.zeros_like(s)
    pos = s > 0
    out[pos] = special.erfc(0.5 / np.sqrt(s[pos]))
    return out


def cauchy_cdf(x, t: float = 1.0):
    """CDF of the 1-D Poisson kernel (Cauchy law with scale t)."""
    return 0.5 + np.arctan(np.asarray(x, float) / t) / math.pi


def normal_cdf(x, t: float = 1.0):
    """CDF of the 1-D Gaussian heat kernel at time t (variance 2t)."""
    return 0.5 * special.erfc(-np.asarray(x, float) / (2 * math.sqrt(t)))
