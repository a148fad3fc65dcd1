"""Velocity grids, discrete Fourier transforms and the X^alpha norms.

Fourier convention: f_hat(xi) = int exp(-2 pi i xi.v) f(v) dv, with no other
2 pi factors. On the cube [-R, R)^d with n points per axis the velocity nodes
are v_j = -R + j h (h = 2R/n) and the dual lattice is xi_k = k/(2R) with
k in [-n/2, n/2). Spectral arrays are stored in centered order: array index
i along an axis holds k = i - n/2.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import special

CONVENTION = "e-2pi"


class SupportOverflowError(ValueError):
    """The requested field does not fit inside the truncated velocity box."""


class HermitianSymmetryError(ValueError):
    """A spectral field cannot be the transform of a real density."""


@dataclass(frozen=True)
class VelocityGrid:
    d: int
    n: int
    extent: float

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 2:
            raise ValueError(f"dimension must be an integer >= 2, got {self.d}")
        if int(self.n) != self.n or self.n < 4 or self.n % 2:
            raise ValueError(f"points per axis must be an even integer >= 4, got {self.n}")
        if not np.isfinite(self.extent) or self.extent <= 0:
            raise ValueError(f"extent must be positive, got {self.extent}")
        object.__setattr__(self, "d", int(self.d))
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "extent", float(self.extent))

    @property
    def h(self) -> float:
        return 2.0 * self.extent / self.n

    @property
    def dv(self) -> float:
        return self.h**self.d

    @property
    def dxi(self) -> float:
        return 1.0 / (2.0 * self.extent)

    @property
    def shape(self) -> tuple:
        return (self.n,) * self.d

    def axis(self) -> np.ndarray:
        """Velocity nodes along one axis."""
        return -self.extent + self.h * np.arange(self.n)

    def frequency_indices(self) -> np.ndarray:
        """Integer dual indices k along one axis, centered order."""
        return np.arange(self.n) - self.n // 2

    def frequency_axis(self) -> np.ndarray:
        return self.frequency_indices() * self.dxi

    def velocities(self) -> list:
        """Coordinate arrays v_1, ..., v_d (ij indexing)."""
        return np.meshgrid(*([self.axis()] * self.d), indexing="ij")

    def speed_squared(self) -> np.ndarray:
        return sum(x**2 for x in self.velocities())

    def frequency_norm(self) -> np.ndarray:
        """|xi_k| on the dual lattice."""
        ax = self.frequency_axis()
        return np.sqrt(sum(x**2 for x in np.meshgrid(*([ax] * self.d), indexing="ij")))

    def header(self) -> dict:
        return {"d": self.d, "n": self.n, "R": self.extent, "convention": CONVENTION}


def make_grid(d: int, n: int, extent: float) -> VelocityGrid:
    """Uniform grid on [-R, R)^d with n points per axis."""
    return VelocityGrid(d, n, extent)


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.flags.writeable = False
    return a


@functools.lru_cache(maxsize=16)
def _sign_pattern(d: int, n: int) -> np.ndarray:
    k = np.arange(n) - n // 2
    s = np.ones((1,) * d)
    for ax in range(d):
        shape = [1] * d
        shape[ax] = n
        s = s * ((-1.0) ** k).reshape(shape)
    return s


@dataclass(frozen=True, eq=False)
class DensityField:
    grid: VelocityGrid
    values: np.ndarray
    status: str = "ok"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.grid.shape:
            raise ValueError(f"values shape {v.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("density values must be finite")
        object.__setattr__(self, "values", _readonly(v))

    @functools.cached_property
    def spectral(self) -> "SpectralField":
        return to_spectral(self)

    def mass(self) -> float:
        return float(self.values.sum() * self.grid.dv)

    def __add__(self, other: "DensityField") -> "DensityField":
        _same_grid(self.grid, other.grid)
        return DensityField(self.grid, self.values + other.values)

    def __sub__(self, other: "DensityField") -> "DensityField":
        _same_grid(self.grid, other.grid)
        return DensityField(self.grid, self.values - other.values)

    def __mul__(self, c: float) -> "DensityField":
        return DensityField(self.grid, self.values * float(c))

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class SpectralField:
    grid: VelocityGrid
    coefficients: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=complex)
        if c.shape != self.grid.shape:
            raise ValueError(f"coefficient shape {c.shape} does not match grid {self.grid.shape}")
        object.__setattr__(self, "coefficients", _readonly(c))

    def hermitian_defect(self) -> float:
        """max |F(-k) - conj F(k)| over k whose mirror lies on the lattice."""
        c = self.coefficients
        inner = tuple(slice(1, None) for _ in range(self.grid.d))
        sub = c[inner]
        mirror = sub[tuple(slice(None, None, -1) for _ in range(self.grid.d))]
        return float(np.max(np.abs(mirror - np.conj(sub)), initial=0.0))


@dataclass(frozen=True)
class NormReport:
    l1: float
    hdot_alpha: float
    x_alpha: float
    alpha: float


def _same_grid(a: VelocityGrid, b: VelocityGrid) -> None:
    if a != b:
        raise ValueError(f"fields live on different grids: {a} vs {b}")


def to_spectral(f: DensityField) -> SpectralField:
    """Quadrature of int exp(-2 pi i xi.v) f(v) dv on the dual lattice."""
    g = f.grid
    F = np.fft.fftshift(np.fft.fftn(f.values)) * g.dv * _sign_pattern(g.d, g.n)
    return SpectralField(g, F)


def spectral_to_real(F: np.ndarray, grid: VelocityGrid) -> np.ndarray:
    """Complex inverse transform sum_k F(k) exp(2 pi i xi_k.v) dxi^d at the nodes."""
    scale = grid.n**grid.d * grid.dxi**grid.d
    return np.fft.ifftn(np.fft.ifftshift(F * _sign_pattern(grid.d, grid.n))) * scale


def from_spectral(F: SpectralField, rtol: float = 1e-8) -> DensityField:
    """Inverse transform; the imaginary residue is measured and must stay below
    rtol times the L1 norm of the coefficients (which bounds sup |f|)."""
    g = F.grid
    z = spectral_to_real(F.coefficients, g)
    scale = np.abs(F.coefficients).sum() * g.dxi**g.d
    resid = float(np.max(np.abs(z.imag), initial=0.0))
    if resid > rtol * max(scale, np.finfo(float).tiny):
        raise HermitianSymmetryError(
            f"imaginary residue {resid:.3e} exceeds {rtol:g} x {scale:.3e}; coefficients are not Hermitian"
        )
    return DensityField(g, z.real)


def hdot_norm(F: SpectralField, alpha: float) -> float:
    """(sum |xi|^(2 alpha) |F|^2 dxi^d)^(1/2)."""
    g = F.grid
    w = np.abs(F.coefficients) ** 2
    if alpha != 0:
        w = w * g.frequency_norm() ** (2.0 * alpha)
    return float(np.sqrt(w.sum() * g.dxi**g.d))


def norms(f: DensityField, alpha: float) -> NormReport:
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    l1 = float(np.abs(f.values).sum() * f.grid.dv)
    hd = hdot_norm(f.spectral, alpha)
    return NormReport(l1=l1, hdot_alpha=hd, x_alpha=max(l1, hd), alpha=float(alpha))


def _check_mass_loss(reference: float, got: float, tol: float, what: str) -> None:
    if abs(reference) > 0 and abs(got - reference) > tol * abs(reference):
        raise SupportOverflowError(
            f"{what}: mass {got:.10g} differs from {reference:.10g} by more than {tol:g} relative"
        )


def _trig_eval_matrix(grid: VelocityGrid, x: np.ndarray) -> np.ndarray:
    """E[j, k] = exp(2 pi i xi_k x_j) dxi, zero for points outside the box."""
    E = np.exp(2j * np.pi * np.outer(x, grid.frequency_axis())) * grid.dxi
    E[(x < -grid.extent) | (x >= grid.extent)] = 0.0
    return E


def evaluate_trig(F: SpectralField, points_per_axis: Sequence[np.ndarray]) -> np.ndarray:
    """Trigonometric interpolant of F on a tensor grid of points (zero outside the box)."""
    g = F.grid
    out = F.coefficients
    for ax, x in enumerate(points_per_axis):
        E = _trig_eval_matrix(g, np.asarray(x, float))
        out = np.moveaxis(np.tensordot(E, out, axes=([1], [ax])), 0, ax)
    return out


def dilate(f: DensityField, s: float, tol: float = 1e-6) -> DensityField:
    """f_s(v) = s^(-d) f(v/s), resampled on the same grid by spectral interpolation."""
    if not s > 0:
        raise ValueError("scale factor must be positive")
    if s == 1:
        return f
    g = f.grid
    x = g.axis() / s
    vals = evaluate_trig(f.spectral, [x] * g.d).real * s ** (-g.d)
    out = DensityField(g, vals)
    _check_mass_loss(f.mass(), out.mass(), tol, "dilation support overflow")
    return out


def gaussian_field(grid: VelocityGrid, mass: float = 1.0, width: float = 1.0,
                   center: Optional[Sequence[float]] = None, tol: float = 1e-6) -> DensityField:
    """m s^(-d) exp(-pi |v - a|^2 / s^2) sampled on the grid.

    Rejects parameters for which more than ``tol`` of the mass lies outside
    the box (computed exactly from the error function).
    """
    if not width > 0:
        raise ValueError("width must be positive")
    a = np.zeros(grid.d) if center is None else np.asarray(center, float)
    if a.shape != (grid.d,):
        raise ValueError("center has the wrong dimension")
    R = grid.extent
    inside = np.prod([0.5 * (special.erf(np.sqrt(np.pi) * (R - c) / width)
                             + special.erf(np.sqrt(np.pi) * (R + c) / width)) for c in a])
    if 1.0 - inside > tol:
        raise SupportOverflowError(
            f"gaussian support overflow: {1.0 - inside:.3e} of the mass lies outside [-R, R)^d"
        )
    r2 = sum((x - c) ** 2 for x, c in zip(grid.velocities(), a))
    vals = mass * width ** (-grid.d) * np.exp(-np.pi * r2 / width**2)
    return DensityField(grid, vals)


def gaussian_mixture(grid: VelocityGrid, masses, widths, centers, tol: float = 1e-6) -> DensityField:
    vals = np.zeros(grid.shape)
    for m, s, a in zip(masses, widths, centers):
        vals += gaussian_field(grid, m, s, a, tol=tol).values
    return DensityField(grid, vals)


def random_mixture(grid: VelocityGrid, rng: np.random.Generator, components: int = 3,
                   width_range=(0.7, 1.3), spread: float = 1.0) -> DensityField:
    """Random nonnegative Gaussian mixture used as a test family member."""
    masses = rng.uniform(0.2, 1.0, components)
    widths = rng.uniform(*width_range, components)
    centers = rng.uniform(-spread, spread, (components, grid.d))
    return gaussian_mixture(grid, masses, widths, centers, tol=1e-4)


# -- serialization -----------------------------------------------------------

def save_field(path, f: DensityField, fmt: str = "binary") -> None:
    """Write a field dump: one header line, then values in C order.

    The header line is ``# d=<d> n=<n> R=<R> convention=e-2pi dtype=<...>``.
    ``fmt="binary"`` appends little-endian float64 bytes, ``fmt="text"``
    appends one value per line in repr precision.
    """
    g = f.grid
    if fmt not in ("binary", "text"):
        raise ValueError("fmt must be 'binary' or 'text'")
    dtype = "<f8" if fmt == "binary" else "text"
    head = f"# d={g.d} n={g.n} R={g.extent!r} convention={CONVENTION} dtype={dtype}\n"
    with open(path, "wb") as fh:
        fh.write(head.encode("ascii"))
        if fmt == "binary":
            fh.write(np.ascontiguousarray(f.values, dtype="<f8").tobytes())
        else:
            fh.write("".join(f"{x!r}\n" for x in f.values.ravel().tolist()).encode("ascii"))


def load_field(path) -> DensityField:
    with open(path, "rb") as fh:
        head = fh.readline().decode("ascii").strip()
        body = fh.read()
    if not head.startswith("#"):
        raise ValueError("missing field header")
    meta = dict(tok.split("=", 1) for tok in head[1:].split())
    if meta.get("convention") != CONVENTION:
        raise ValueError(f"unsupported Fourier convention {meta.get('convention')!r}")
    g = make_grid(int(meta["d"]), int(meta["n"]), float(meta["R"]))
    if meta.get("dtype") == "<f8":
        vals = np.frombuffer(body, dtype="<f8")
    else:
        vals = np.array([float(x) for x in body.decode("ascii").split()])
    if vals.size != g.n**g.d:
        raise ValueError("field dump is truncated")
    return DensityField(g, vals.reshape(g.shape))
