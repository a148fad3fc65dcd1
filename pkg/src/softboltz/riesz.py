"""Fractional integrals I_lambda g(v) = int |v - w|^(-lambda) g(w) dw on a grid.

Two independent routes are provided:
  * ``riesz_potential``: real-space lattice sum with a zeta-corrected kernel,
    evaluated as an aperiodic FFT convolution;
  * ``riesz_potential_fourier``: the frequency-side form
    c int |zeta|^(lambda-d) g_hat(zeta) exp(2 pi i zeta.v) dzeta, summed on
    the dual lattice with the same kind of correction at zeta = 0.
"""

from __future__ import annotations

import numpy as np
from scipy import signal

from .grid import DensityField, VelocityGrid, spectral_to_real
from .kernels import riesz_constant
from .lattice import singular_weights


def _check_lambda(lam: float, d: int) -> None:
    if not 0 < lam < d:
        raise ValueError(f"lambda must lie in (0, d), got {lam}")


def real_space_kernel(grid: VelocityGrid, lam: float) -> np.ndarray:
    """Corrected weights of |u|^(-lambda) on offsets u in h [-(n-1), n-1]^d."""
    m = grid.n - 1
    return singular_weights((2 * m + 1,) * grid.d, (m,) * grid.d, grid.h, lam)


def riesz_potential(f: DensityField, lam: float, absolute: bool = False) -> np.ndarray:
    """sum_w K(v - w) g(w) at every node, K the corrected kernel (no periodization)."""
    g = f.grid
    _check_lambda(lam, g.d)
    vals = np.abs(f.values) if absolute else f.values
    return signal.fftconvolve(vals, real_space_kernel(g, lam), mode="valid")


def dealiased(F: np.ndarray) -> np.ndarray:
    """Coefficients with the unpaired Nyquist planes (k_i = -n/2) set to zero."""
    out = np.array(F, dtype=complex, copy=True)
    for ax in range(out.ndim):
        idx = [slice(None)] * out.ndim
        idx[ax] = 0
        out[tuple(idx)] = 0.0
    return out


def frequency_weights(grid: VelocityGrid, lam: float) -> np.ndarray:
    """Corrected weights of |zeta|^(lambda-d) dxi^d on the dual lattice (centered order)."""
    n = grid.n
    return singular_weights((n,) * grid.d, (n // 2,) * grid.d, grid.dxi, grid.d - lam)


def riesz_potential_fourier(f: DensityField, lam: float, constant: float | None = None) -> np.ndarray:
    """c sum_zeta w(zeta) g_hat(zeta) exp(2 pi i zeta.v) at every node.

    ``constant`` defaults to the Fourier symbol constant of |v|^(-lambda).
    The Nyquist planes are dropped so the result is real and matches the
    input set used by the gain term.
    """
    g = f.grid
    _check_lambda(lam, g.d)
    c = riesz_constant(lam, g.d) if constant is None else constant
    w = frequency_weights(g, lam)
    z = spectral_to_real(w * dealiased(f.spectral.coefficients), g) / g.dxi**g.d
    return c * z.real


def fourier_side_sup(f: DensityField, lam: float) -> float:
    """sup over the dual lattice of sum_zeta |zeta|^(lambda-d) |f_hat(xi - zeta)| dxi^d."""
    g = f.grid
    _check_lambda(lam, g.d)
    A = np.abs(f.spectral.coefficients)
    m = g.n - 1
    w = singular_weights((2 * m + 1,) * g.d, (m,) * g.d, g.dxi, g.d - lam)
    conv = signal.fftconvolve(A, w, mode="valid")
    return float(conv.max(initial=0.0))
