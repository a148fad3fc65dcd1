"""Both sides of the interpolation inequalities on X^alpha = L^1 cap H^alpha.

Every check returns an ``InequalityCheck`` holding the left-hand side, the
right-hand side with its constant stripped (a product of norms raised to the
interpolation exponents) and their ratio. The exponents are dilation balanced,
so for f_s(v) = s^(-d) f(v/s) the ratio is independent of s up to grid error;
maxima of the ratio over random families are empirical constants, not sharp
ones.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .grid import DensityField, hdot_norm, norms
from .kernels import lambda_d
from .riesz import fourier_side_sup, frequency_weights, riesz_potential
from .grid import spectral_to_real
from .sphere import sphere_integral_bound  # noqa: F401  (re-exported)


class InequalityHypothesisError(ValueError):
    """Parameters outside the range in which an inequality is asserted."""


@dataclass
class InequalityCheck:
    name: str
    lhs: float
    rhs_core: float
    ratio: float
    exponents: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)

    def as_row(self) -> dict:
        row = {"name": self.name, "lhs": self.lhs, "rhs_core": self.rhs_core, "ratio": self.ratio}
        row.update({f"param_{k}": v for k, v in sorted(self.params.items())})
        row.update({f"exp_{k}": v for k, v in sorted(self.exponents.items())})
        return row


def _ratio(lhs: float, rhs: float) -> float:
    if lhs == 0:
        return 0.0
    return lhs / rhs if rhs > 0 else math.inf


def _interp(l1: float, hd: float, e: float) -> float:
    """l1^(1-e) hd^e, with 0^0 = 1."""
    a = l1 ** (1 - e) if e != 1 else 1.0
    b = hd**e if e != 0 else 1.0
    return a * b


def _lp(values: np.ndarray, p: float, measure: float) -> float:
    a = np.abs(values)
    if math.isinf(p):
        return float(a.max(initial=0.0))
    return float((a**p).sum() * measure) ** (1.0 / p)


def _check_p(p: float) -> None:
    if not (p >= 1):
        raise InequalityHypothesisError(f"p must lie in [1, inf], got {p}")


def interpolation_exponents(d: int, alpha: float, lam: float | None = None, p: float | None = None,
                            beta: float | None = None) -> dict:
    """theta, mu, nu, kappa, delta, gamma for the given parameters (those that apply)."""
    out = {}
    D = d + 2 * alpha
    if lam is not None:
        out["theta"] = 2 * lam / D
        out["delta"] = d / D
        out["gamma"] = (2 * lam + 2 * alpha) / D
    if p is not None:
        out["mu"] = 0.0 if math.isinf(p) else 2 * d / (p * D)
        out["nu"] = (2 * d / D) * (1 - (0.0 if math.isinf(p) else 1 / p))
    if beta is not None:
        out["kappa"] = (d + 2 * beta) / D
    return out


def check_hausdorff_young(f: DensityField, alpha: float, p: float) -> InequalityCheck:
    """||f^||_p <= C ||f||_1^(1-mu) ||f||_H^mu, mu = 2d / (p (d + 2 alpha))."""
    _check_p(p)
    d = f.grid.d
    if p < 2 and not alpha > (1 / p - 0.5) * d:
        raise InequalityHypothesisError(f"alpha > (1/p - 1/2) d = {(1 / p - 0.5) * d:g} required for p={p:g}")
    if p >= 2 and alpha < 0:
        raise InequalityHypothesisError("alpha >= 0 required")
    mu = interpolation_exponents(d, alpha, p=p)["mu"]
    nr = norms(f, alpha)
    lhs = _lp(f.spectral.coefficients, p, f.grid.dxi**d)
    rhs = _interp(nr.l1, nr.hdot_alpha, mu)
    return InequalityCheck("hausdorff_young", lhs, rhs, _ratio(lhs, rhs), {"mu": mu},
                           {"alpha": alpha, "p": p, "d": d})


def check_sobolev(f: DensityField, alpha: float, p: float) -> InequalityCheck:
    """||f||_p <= C ||f||_1^(1-nu) ||f||_H^nu, nu = (2d / (d + 2 alpha)) (1 - 1/p)."""
    _check_p(p)
    d = f.grid.d
    if p > 2 and not alpha > (0.5 - (0 if math.isinf(p) else 1 / p)) * d:
        raise InequalityHypothesisError(f"alpha > (1/2 - 1/p) d required for p={p:g}")
    if p <= 2 and alpha < 0:
        raise InequalityHypothesisError("alpha >= 0 required")
    nu = interpolation_exponents(d, alpha, p=p)["nu"]
    nr = norms(f, alpha)
    lhs = _lp(f.values, p, f.grid.dv)
    rhs = _interp(nr.l1, nr.hdot_alpha, nu)
    return InequalityCheck("sobolev", lhs, rhs, _ratio(lhs, rhs), {"nu": nu}, {"alpha": alpha, "p": p, "d": d})


def _gradient_sup(f: DensityField) -> float:
    """sum over first-order partials of sup |d_i f|, by spectral differentiation."""
    g = f.grid
    F = f.spectral.coefficients
    xi = g.frequency_axis()
    total = 0.0
    for ax in range(g.d):
        shape = [1] * g.d
        shape[ax] = g.n
        k = (2j * np.pi * xi).reshape(shape)
        D = F * k
        idx = [slice(None)] * g.d
        idx[ax] = 0
        D[tuple(idx)] = 0.0  # the unpaired Nyquist plane has no real derivative
        total += float(np.abs(spectral_to_real(D, g).real).max())
    return total


def check_embedding(f: DensityField, alpha: float, order: int = 0) -> InequalityCheck:
    """sum_{|m| <= order} sup |d^m f| <= K ||f||_X for alpha > order + d/2.

    order 0 is the continuous embedding; order 1 is a first-derivative spot
    check of the C^l statement. Neither ratio is dilation invariant.
    """
    d = f.grid.d
    if order not in (0, 1):
        raise ValueError("order must be 0 or 1")
    if not alpha > order + d / 2:
        raise InequalityHypothesisError(f"alpha > {order} + d/2 = {order + d / 2:g} required")
    nr = norms(f, alpha)
    lhs = float(np.abs(f.values).max(initial=0.0))
    if order == 1:
        lhs += _gradient_sup(f)
    return InequalityCheck("embedding" if order == 0 else "embedding_c1", lhs, nr.x_alpha,
                           _ratio(lhs, nr.x_alpha), {}, {"alpha": alpha, "order": order, "d": d})


def check_derivative_moment(f: DensityField, alpha: float, order: int = 1) -> InequalityCheck:
    """int |xi|^m |f^| dxi <= C ||f||_1^(1-delta) ||f||_H^delta, delta = 2(d + m)/(d + 2 alpha)."""
    d = f.grid.d
    if not alpha > order + d / 2:
        raise InequalityHypothesisError(f"alpha > {order} + d/2 required")
    de = 2 * (d + order) / (d + 2 * alpha)
    nr = norms(f, alpha)
    g = f.grid
    lhs = float((g.frequency_norm() ** order * np.abs(f.spectral.coefficients)).sum() * g.dxi**d)
    rhs = _interp(nr.l1, nr.hdot_alpha, de)
    return InequalityCheck("derivative_moment", lhs, rhs, _ratio(lhs, rhs), {"delta": de},
                           {"alpha": alpha, "order": order, "d": d})


def check_monotone(f: DensityField, alpha: float, beta: float) -> InequalityCheck:
    """||f||_{H^beta} <= C ||f||_1^(1-kappa) ||f||_{H^alpha}^kappa, kappa = (d + 2 beta)/(d + 2 alpha)."""
    if not 0 <= beta <= alpha:
        raise InequalityHypothesisError(f"0 <= beta <= alpha required (beta={beta:g}, alpha={alpha:g})")
    d = f.grid.d
    kappa = interpolation_exponents(d, alpha, beta=beta)["kappa"]
    nr = norms(f, alpha)
    lhs = hdot_norm(f.spectral, beta)
    rhs = _interp(nr.l1, nr.hdot_alpha, kappa)
    if beta == alpha:
        rhs = nr.hdot_alpha
    return InequalityCheck("monotone", lhs, rhs, _ratio(lhs, rhs), {"kappa": kappa},
                           {"alpha": alpha, "beta": beta, "d": d})


def _check_lambda(lam: float, d: int) -> None:
    if not 0 < lam < d:
        raise InequalityHypothesisError(f"lambda must lie in (0, d), got {lam}")


def _check_alpha_for_lambda(lam: float, alpha: float, d: int) -> None:
    if lam < d / 2 and alpha < 0:
        raise InequalityHypothesisError("alpha >= 0 required for lambda < d/2")
    if lam >= d / 2 and not alpha > lam - d / 2:
        raise InequalityHypothesisError(f"alpha > lambda - d/2 = {lam - d / 2:g} required for lambda >= d/2")


def fractional_integral(f: DensityField, lam: float, absolute: bool = True, self_cell: str = "zeta") -> np.ndarray:
    """int |v - w|^(-lambda) |f(w)| dw at every node.

    ``self_cell`` selects the treatment of the singular term w = v: "zeta"
    uses lattice-zeta corrected weights (exact for smooth data to high
    order), "ball" replaces it by the kernel averaged over a ball of the
    cell's volume.
    """
    _check_lambda(lam, f.grid.d)
    if self_cell == "zeta":
        return riesz_potential(f, lam, absolute=absolute)
    if self_cell != "ball":
        raise ValueError("self_cell must be 'zeta' or 'ball'")
    from scipy import signal
    g = f.grid
    m = g.n - 1
    offs = np.arange(-m, m + 1) * g.h
    U = np.sqrt(sum(np.meshgrid(*([offs**2] * g.d), indexing="ij")))
    with np.errstate(divide="ignore"):
        K = np.where(U > 0, U ** (-lam), 0.0) * g.dv
    area = 2 * math.pi ** (g.d / 2) / math.gamma(g.d / 2)
    radius = (g.dv * g.d / area) ** (1 / g.d)
    K[(m,) * g.d] = area * radius ** (g.d - lam) / (g.d - lam)
    vals = np.abs(f.values) if absolute else f.values
    return signal.fftconvolve(vals, K, mode="valid")


def j_lambda(f: DensityField, lam: float, alpha: float | None = None, self_cell: str = "zeta"):
    """J_lambda(f) = max_v int |v - w|^(-lambda) |f(w)| dw and its check against
    ||f||_1^(1-theta) ||f||_H^theta, theta = 2 lambda / (d + 2 alpha).

    Returns (value, check); check is None when alpha is not given.
    """
    d = f.grid.d
    _check_lambda(lam, d)
    value = float(fractional_integral(f, lam, True, self_cell).max(initial=0.0))
    if alpha is None:
        return value, None
    _check_alpha_for_lambda(lam, alpha, d)
    theta = interpolation_exponents(d, alpha, lam=lam)["theta"]
    nr = norms(f, alpha)
    rhs = _interp(nr.l1, nr.hdot_alpha, theta)
    return value, InequalityCheck("j_lambda", value, rhs, _ratio(value, rhs), {"theta": theta},
                                  {"alpha": alpha, "lambda": lam, "d": d})


def j_lambda_fourier(f: DensityField, lam: float) -> float:
    """sup_xi sum_zeta |zeta|^(lambda-d) |f^(xi - zeta)| dxi^d on the dual lattice."""
    _check_lambda(lam, f.grid.d)
    return fourier_side_sup(f, lam)


def j_lambda_fourier_check(f: DensityField, lam: float, alpha: float) -> InequalityCheck:
    d = f.grid.d
    _check_alpha_for_lambda(lam, alpha, d)
    value = j_lambda_fourier(f, lam)
    theta = interpolation_exponents(d, alpha, lam=lam)["theta"]
    nr = norms(f, alpha)
    rhs = _interp(nr.l1, nr.hdot_alpha, theta)
    return InequalityCheck("j_lambda_fourier", value, rhs, _ratio(value, rhs), {"theta": theta},
                           {"alpha": alpha, "lambda": lam, "d": d})


def frequency_side_sum(f: DensityField, lam: float, v=None) -> float:
    """sum_zeta |zeta|^(lambda-d) f^(zeta) exp(2 pi i v.zeta) dxi^d at one velocity v (default 0).

    Multiplying by the Riesz symbol constant gives the fractional integral of f at v.
    """
    g = f.grid
    _check_lambda(lam, g.d)
    v = np.zeros(g.d) if v is None else np.asarray(v, float)
    w = frequency_weights(g, lam)
    phase = np.ones(g.shape, dtype=complex)
    xi = g.frequency_axis()
    for ax in range(g.d):
        shape = [1] * g.d
        shape[ax] = g.n
        phase = phase * np.exp(2j * np.pi * v[ax] * xi).reshape(shape)
    F = f.spectral.coefficients.copy()
    for ax in range(g.d):
        idx = [slice(None)] * g.d
        idx[ax] = 0
        F[tuple(idx)] = 0.0
    return float((w * F * phase).sum().real)


def fourier_representation(f: DensityField, lam: float, v=None) -> float:
    """The frequency-side sum scaled by lambda_d as the constant is written in the
    representation formula. With the exact symbol constant (``riesz_constant``)
    the product reproduces the real-space fractional integral."""
    return lambda_d(lam, f.grid.d) * frequency_side_sum(f, lam, v)


# -- family sweeps and reports ------------------------------------------------

def sweep(checks) -> dict:
    """Summary of a list of InequalityCheck: empirical constant and ratio spread."""
    ratios = np.array([c.ratio for c in checks], float)
    return {"count": int(ratios.size), "max": float(ratios.max(initial=0.0)),
            "min": float(ratios.min(initial=0.0)), "finite": bool(np.all(np.isfinite(ratios)))}


def dilation_spread(ratios) -> float:
    """max/min - 1 over ratios measured for one field at several dilations."""
    r = np.asarray(ratios, float)
    return float(r.max() / r.min() - 1.0)


def write_csv(path, checks) -> None:
    rows = [c.as_row() for c in checks]
    head = ["name", "lhs", "rhs_core", "ratio"]
    keys = head + sorted({k for r in rows for k in r} - set(head))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=keys)
        w.writeheader()
        for r in rows:
            w.writerow(r)


def write_json(path, checks) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump([asdict(c) for c in checks], fh, sort_keys=True, indent=2)
