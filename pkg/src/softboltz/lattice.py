"""Lattice sums of point singularities |x|^(-s).

A punctured trapezoid sum of |x|^(-s) phi(x) over the lattice delta Z^d misses
the singular cell. The standard correction (zeta-function quadrature) adds
    -delta^(d-s) Z(s) phi(0) - delta^(d-s+2) Z(s-2) / (2d) Lap phi(0),
where Z is the Epstein zeta function of Z^d,
Z(s) = sum_{k != 0} |k|^(-s) (analytically continued). With the Laplacian
replaced by the 2d+1 point stencil the correction becomes a modified weight at
the origin and its nearest neighbours, so a singular convolution turns into a
plain discrete convolution with a corrected kernel.
"""

from __future__ import annotations

import functools

import numpy as np
from scipy import special


def _upper_gamma(a: float, x: np.ndarray) -> np.ndarray:
    """Non-regularized upper incomplete gamma Gamma(a, x) for any real a, x > 0."""
    x = np.asarray(x, float)
    if a > 0:
        return special.gammaincc(a, x) * special.gamma(a)
    if a == 0:
        return special.exp1(x)
    # Gamma(a, x) = (Gamma(a + 1, x) - x^a e^(-x)) / a
    return (_upper_gamma(a + 1.0, x) - x**a * np.exp(-x)) / a


@functools.lru_cache(maxsize=256)
def epstein_zeta(s: float, d: int = 3, shells: int = 6) -> float:
    """Epstein zeta of the cubic lattice Z^d by Ewald splitting.

    Uses the symmetric form
        Z(s) = pi^(s/2)/Gamma(s/2) [ sum' (G(s/2, pi k^2) (pi k^2)^(-s/2)
               + G((d-s)/2, pi k^2) (pi k^2)^(-(d-s)/2)) - 2/(d-s) - 2/s ],
    with G the upper incomplete gamma function. Terms decay like exp(-pi k^2),
    so a handful of shells gives double precision.
    """
    s = float(s)
    if s == d:
        raise ValueError("Z(s) has a pole at s = d")
    if s == 0.0:
        return -1.0
    if s < 0 and float(s / 2).is_integer():
        return 0.0
    r = np.arange(-shells, shells + 1)
    k2 = np.zeros(1, dtype=np.int64)
    for _ in range(d):
        k2 = (k2[:, None] + (r**2)[None, :]).ravel()
    vals, counts = np.unique(k2[k2 > 0], return_counts=True)
    x = np.pi * vals.astype(float)
    a1, a2 = s / 2.0, (d - s) / 2.0
    terms = _upper_gamma(a1, x) * x ** (-a1) + _upper_gamma(a2, x) * x ** (-a2)
    total = float(np.sum(counts * terms)) - 2.0 / (d - s) - 2.0 / s
    return float(np.pi**a1 * special.rgamma(a1) * total)


def singular_weights(shape: tuple, center: tuple, delta: float, s: float) -> np.ndarray:
    """Quadrature weights for phi -> int |x|^(-s) phi(x) dx on a lattice block.

    ``center`` is the array index of x = 0. Away from the origin the weight is
    |x|^(-s) delta^d; the origin and its 2d neighbours carry the second-order
    zeta correction. Requires s < d.
    """
    d = len(shape)
    idx = np.meshgrid(*[np.arange(m) - c for m, c in zip(shape, center)], indexing="ij")
    r = np.sqrt(sum((k * delta) ** 2 for k in idx))
    with np.errstate(divide="ignore"):
        w = np.where(r > 0, r ** (-s), 0.0) * delta**d
    w0 = -delta ** (d - s) * epstein_zeta(s, d)
    w2 = -delta ** (d - s) * epstein_zeta(s - 2.0, d) / (2.0 * d)
    w[center] += w0 - 2 * d * w2
    for ax in range(d):
        for step in (-1, 1):
            pos = list(center)
            pos[ax] += step
            if 0 <= pos[ax] < shape[ax]:
                w[tuple(pos)] += w2
    return w
