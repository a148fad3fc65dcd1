"""Collision kernels B = |v - v*|^(-lambda) b(k.sigma) and the gain multiplier m."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate, interpolate

from .sphere import adaptive_sphere_integral, sphere_area


@dataclass(frozen=True, eq=False)
class AngularKernel:
    """Angular part b(t), t = k.sigma in [-1, 1].

    ``identifier`` names the profile and its parameters; it enters table hashes.
    ``breakpoints`` lists interior points where b is not smooth.
    """

    b: Callable[[np.ndarray], np.ndarray]
    identifier: str
    p: float = math.inf
    breakpoints: tuple = ()
    isotropic: bool = False

    def __post_init__(self):
        if not 1 <= self.p <= math.inf:
            raise ValueError("integrability index p must lie in [1, inf]")
        t = np.linspace(-1, 1, 4097)
        vals = np.asarray(self(t), float)
        if np.any(vals < 0) or not np.all(np.isfinite(vals)):
            raise ValueError(f"angular kernel {self.identifier} must be finite and nonnegative")

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, float)
        return np.broadcast_to(np.asarray(self.b(t), float), t.shape)

    # constructors -----------------------------------------------------------
    @classmethod
    def constant(cls, p: float = math.inf, value: float = 1.0) -> "AngularKernel":
        return cls(lambda t: np.full(np.shape(t), float(value)), f"const({value:g})", p, (), True)

    @classmethod
    def abs_cos(cls, p: float = math.inf) -> "AngularKernel":
        return cls(np.abs, "abs", p, (0.0,))

    @classmethod
    def truncated_power(cls, nu: float, cutoff: float, p: float = math.inf) -> "AngularKernel":
        """b(t) = min((1 - t)^(-nu), cutoff^(-nu)), bounded near grazing t -> 1."""
        if nu < 0 or not 0 < cutoff < 2:
            raise ValueError("need nu >= 0 and 0 < cutoff < 2")

        def b(t):
            return np.maximum(1.0 - np.asarray(t, float), cutoff) ** (-nu)
        return cls(b, f"trunc_power(nu={nu:g},cut={cutoff:g})", p, (1.0 - cutoff,))

    @classmethod
    def tabulated(cls, t_nodes, values, p: float = math.inf, name: str = "table") -> "AngularKernel":
        """Monotone (PCHIP) interpolation of sampled values on [-1, 1]."""
        t_nodes = np.asarray(t_nodes, float)
        values = np.asarray(values, float)
        if t_nodes[0] > -1 or t_nodes[-1] < 1:
            raise ValueError("tabulated nodes must cover [-1, 1]")
        pchip = interpolate.PchipInterpolator(t_nodes, values)
        digest = hashlib.sha256(np.concatenate([t_nodes, values]).tobytes()).hexdigest()[:12]
        return cls(lambda t: pchip(np.clip(t, -1, 1)), f"{name}:{digest}", p, tuple(t_nodes[1:-1]))

    # norms ------------------------------------------------------------------
    def norm(self, p: Optional[float] = None, d: int = 3) -> float:
        """||b||_{L^p(S^(d-1))} = (|S^(d-2)| int_0^pi b(cos th)^p sin^(d-2) th dth)^(1/p)."""
        p = self.p if p is None else p
        if math.isinf(p):
            t = np.linspace(-1, 1, 20001)
            return float(np.max(self(t)))
        wt = (lambda t: 1.0) if d == 3 else (lambda t: (1 - t * t) ** ((d - 3) / 2))
        pts = [x for x in self.breakpoints if -1 < x < 1]
        val, _ = integrate.quad(lambda t: float(self(t)) ** p * wt(t), -1, 1, points=pts or None,
                                limit=400, epsabs=0, epsrel=1e-12)
        return float((sphere_area(d - 1) * val) ** (1 / p))

    def norm_l1(self, d: int = 3) -> float:
        return self.norm(1.0, d)

    def norm_lp(self, d: int = 3) -> float:
        return self.norm(self.p, d)


def lambda_d(lam: float, d: int) -> float:
    """pi^((lambda-d)/2) Gamma((d-lambda)/2) / Gamma(lambda/2), as written in the
    Fourier representation of the fractional integral.

    This is the historical normalisation; the symbol of |v|^(-lambda) under the
    exp(-2 pi i xi.v) convention is ``riesz_constant`` (they differ by pi^(lambda/2)).
    """
    if not 0 < lam < d:
        raise ValueError(f"lambda must lie in (0, d), got {lam}")
    return math.pi ** ((lam - d) / 2) * math.gamma((d - lam) / 2) / math.gamma(lam / 2)


def riesz_constant(lam: float, d: int) -> float:
    """c with (|v|^(-lambda))^(xi) = c |xi|^(lambda-d) under exp(-2 pi i xi.v)."""
    if not 0 < lam < d:
        raise ValueError(f"lambda must lie in (0, d), got {lam}")
    return math.pi ** (lam - d / 2) * math.gamma((d - lam) / 2) / math.gamma(lam / 2)


@dataclass(frozen=True, eq=False)
class SoftPotentialKernel:
    lam: float
    angular: AngularKernel = field(default_factory=AngularKernel.constant)
    d: int = 3

    def __post_init__(self):
        if not 0 < self.lam < self.d:
            raise ValueError(f"soft potential requires 0 < lambda < d, got lambda={self.lam}, d={self.d}")
        if self.d < 3:
            raise ValueError("collision kernels need d >= 3")
        object.__setattr__(self, "_norms", {})

    @property
    def p(self) -> float:
        return self.angular.p

    @property
    def a(self) -> float:
        """Exponent of the singular factor |zeta - |xi| sigma|^(-a), a = d - lambda."""
        return self.d - self.lam

    def _cached(self, key, fn):
        if key not in self._norms:
            self._norms[key] = fn()
        return self._norms[key]

    @property
    def norm_l1(self) -> float:
        return self._cached("l1", lambda: self.angular.norm_l1(self.d))

    @property
    def norm_lp(self) -> float:
        return self._cached("lp", lambda: self.angular.norm_lp(self.d))

    @property
    def riesz(self) -> float:
        return riesz_constant(self.lam, self.d)

    def identity(self) -> dict:
        return {"lambda": self.lam, "d": self.d, "b": self.angular.identifier, "p": _json_p(self.p)}

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.identity(), sort_keys=True).encode()).hexdigest()


def _json_p(p: float):
    return "inf" if math.isinf(p) else p


def m_isotropic(r, rho, lam: float):
    """Closed form of int_{S^2} |zeta - r sigma|^(lambda-3) dsigma (b = 1, d = 3).

    With a = 3 - lambda: 2 pi ((r+rho)^(2-a) - |r-rho|^(2-a)) / (r rho (2-a)),
    and 2 pi log((r+rho)/|r-rho|) / (r rho) at a = 2. Infinite on r = rho
    when lambda <= 1.
    """
    r = np.asarray(r, float)
    rho = np.asarray(rho, float)
    a = 3.0 - lam
    with np.errstate(divide="ignore", invalid="ignore"):
        if abs(a - 2) < 1e-12:
            out = 2 * np.pi * np.log((r + rho) / np.abs(r - rho)) / (r * rho)
        else:
            out = 2 * np.pi * ((r + rho) ** (2 - a) - np.abs(r - rho) ** (2 - a)) / (r * rho * (2 - a))
        small = np.minimum(r, rho)
        big = np.maximum(r, rho)
        out = np.where(small == 0, 4 * np.pi * big ** (-a), out)
    return out


def kernel_m(kernel: SoftPotentialKernel, xi, zeta, quad_order=(32, 64), rtol: float = 1e-4) -> float:
    """m(xi, zeta) = int_{S^2} b(xi/|xi| . sigma) |zeta - |xi| sigma|^(lambda-d) dsigma.

    The pole of the sphere rule is placed along zeta, where the integrand is
    singular when |zeta| = |xi|. Raises QuadratureConvergenceError when the
    refinement does not settle to 1e-3.
    """
    xi = np.asarray(xi, float)
    zeta = np.asarray(zeta, float)
    if kernel.d != 3:
        raise NotImplementedError("kernel_m is implemented for d = 3")
    r = float(np.linalg.norm(xi))
    rho = float(np.linalg.norm(zeta))
    a = kernel.a
    if r == 0:
        if rho == 0:
            return math.inf
        return kernel.norm_l1 * rho ** (-a)
    xh = xi / r
    if rho == 0:
        pole = xh
    else:
        pole = zeta / rho
    exact = rho > 0 and abs(r - rho) <= 1e-14 * r
    if exact and a >= 2:
        return math.inf

    def integrand(sig):
        dist = np.linalg.norm(zeta[None, :] - r * sig, axis=1)
        return kernel.angular(sig @ xh) * dist ** (-a)
    val, _ = adaptive_sphere_integral(integrand, pole, quad_order[0], quad_order[1],
                                      a if exact else 0.0, rtol)
    return val
