"""Quadrature on the unit sphere with a possibly singular pole.

Points are parametrised by t = cos(theta) measured from a chosen pole and an
azimuth phi. The base rule is Gauss-Legendre in t times the uniform trapezoid
in phi. For integrands with a point singularity at the pole the t-interval is
split dyadically towards t = 1 and the last piece uses a Gauss-Jacobi rule
that absorbs the factor (1 - t)^(-a/2).
"""

from __future__ import annotations

import functools
import math

import numpy as np
from scipy import special


class QuadratureConvergenceError(RuntimeError):
    """Adaptive refinement did not reach the requested relative change."""


def sphere_area(d: int) -> float:
    """|S^(d-1)|."""
    return 2 * math.pi ** (d / 2) / math.gamma(d / 2)


@functools.lru_cache(maxsize=64)
def _gauss(q: int):
    x, w = np.polynomial.legendre.leggauss(q)
    return x, w


@functools.lru_cache(maxsize=64)
def _jacobi(q: int, beta: float):
    x, w = special.roots_jacobi(q, 0.0, beta)
    return x, w


@functools.lru_cache(maxsize=64)
def polar_rule(q: int, levels: int, singular_exponent: float = 0.0):
    """Nodes u = 1 - t in (0, 2] and weights for int_{-1}^{1} F(t) dt.

    levels = 0 is the plain Gauss-Legendre rule. levels = L >= 1 splits u at
    2, 1, 1/2, ..., 2^(1-L) and integrates the last piece [0, 2^(1-L)] with
    Gauss-Jacobi weight u^(-a/2), a = singular_exponent. The returned weights
    already contain that weight, so integrands are passed unmodified except
    that the caller multiplies them by u^(a/2) on the last piece (handled via
    the returned ``jac_scale`` array).
    """
    if levels == 0:
        x, w = _gauss(q)
        return 1.0 - x, w.copy(), np.ones_like(w)
    us, ws, js = [], [], []
    x, w = _gauss(q)
    hi = 2.0
    for _ in range(levels):
        lo = hi / 2
        us.append(lo + (x + 1) * (hi - lo) / 2)
        ws.append(w * (hi - lo) / 2)
        js.append(np.ones(q))
        hi = lo
    beta = -singular_exponent / 2
    if beta > -1e-12:
        us.append((x + 1) * hi / 2)
        ws.append(w * hi / 2)
        js.append(np.ones(q))
    else:
        xj, wj = _jacobi(q, beta)
        u = (xj + 1) * hi / 2
        us.append(u)
        # int_0^hi u^beta g(u) du = (hi/2)^(1+beta) sum wj g(u_j)
        ws.append(wj * (hi / 2) ** (1 + beta))
        js.append(u ** (-beta))
    return np.concatenate(us), np.concatenate(ws), np.concatenate(js)


def _frame(pole: np.ndarray):
    """Orthonormal (e1, e2, pole) frame for a 3-vector pole."""
    p = pole / np.linalg.norm(pole)
    helper = np.array([1.0, 0.0, 0.0]) if abs(p[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(p, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(p, e1)
    return e1, e2, p


def sphere_points(pole, q_theta: int, n_phi: int, levels: int = 0, singular_exponent: float = 0.0):
    """Points sigma on S^2 and weights; the product with jac gives the integrand factor.

    Returns (sigma, weights, jac, u) with u = 1 - sigma.pole.
    """
    u, wt, jac = polar_rule(q_theta, levels, float(singular_exponent))
    t = 1.0 - u
    st = np.sqrt(np.clip(1 - t * t, 0, None))
    phi = 2 * np.pi * np.arange(n_phi) / n_phi
    e1, e2, p = _frame(np.asarray(pole, float))
    sig = (st[:, None, None] * (np.cos(phi)[None, :, None] * e1 + np.sin(phi)[None, :, None] * e2)
           + t[:, None, None] * p)
    w = np.repeat(wt[:, None], n_phi, axis=1) * (2 * np.pi / n_phi)
    jj = np.repeat(jac[:, None], n_phi, axis=1)
    uu = np.repeat(u[:, None], n_phi, axis=1)
    return sig.reshape(-1, 3), w.ravel(), jj.ravel(), uu.ravel()


def adaptive_sphere_integral(integrand, pole, q_theta: int = 32, n_phi: int = 64,
                             singular_exponent: float = 0.0, rtol: float = 1e-4,
                             max_levels: int = 48, fail_rtol: float = 1e-3):
    """Integrate integrand(sigma) over S^2 with dyadic refinement towards the pole.

    The plain product rule is tried first; refinement levels are added until
    two successive values agree to rtol. Returns (value, info).
    """
    prev = None
    levels = 0
    change = math.inf
    history = []
    while True:
        sig, w, jac, _ = sphere_points(pole, q_theta, n_phi, levels, singular_exponent)
        val = float(np.sum(w * jac * integrand(sig)))
        history.append(val)
        if prev is not None:
            change = abs(val - prev) / max(abs(val), 1e-300)
            if change < rtol:
                return val, {"levels": levels, "change": change, "history": history}
        if levels >= max_levels:
            break
        prev = val
        levels = 1 if levels == 0 else levels + 2
    if change < fail_rtol:
        return val, {"levels": levels, "change": change, "history": history}
    raise QuadratureConvergenceError(
        f"sphere quadrature did not converge: relative change {change:.2e} after {levels} levels"
    )


def _zonal_integral(F, d: int, q: int, levels: int, a: float) -> float:
    """|S^(d-2)| int_{-1}^{1} F(t) (1 - t^2)^((d-3)/2) dt with singularity at t = 1."""
    u, w, jac = polar_rule(q, levels, a)
    t = 1 - u
    wt = (u * (2 - u)) ** ((d - 3) / 2) if d != 3 else 1.0
    return float(sphere_area(d - 1) * np.sum(w * jac * wt * F(t)))


def sphere_integral_bound(xi, zeta, a: float, quad_order=(32, 64), rtol: float = 1e-4):
    """Both sides of the surface estimate int |zeta - |xi| sigma|^(-a) dsigma <~ (|xi|+|zeta|)^(-a).

    Returns (lhs, rhs_core). In d = 3 the product rule with the pole along
    zeta is used; other d use the zonal reduction of the same rule.
    """
    xi = np.asarray(xi, float)
    zeta = np.asarray(zeta, float)
    d = xi.size
    if d < 3 or zeta.size != d:
        raise ValueError("sphere_integral_bound needs vectors of equal dimension d >= 3")
    if a >= d - 1:
        raise ValueError(f"exponent a={a} must be below d - 1 = {d - 1} (integrability)")
    r = float(np.linalg.norm(xi))
    rho = float(np.linalg.norm(zeta))
    if r + rho == 0:
        raise ValueError("xi and zeta cannot both vanish")
    rhs = (r + rho) ** (-a)
    if r == 0 or rho == 0:
        return sphere_area(d) * max(r, rho) ** (-a), rhs
    q, n_phi = quad_order
    sing = a if abs(r - rho) <= 1e-14 * max(r, rho) else 0.0
    if d == 3:
        def integrand(sig):
            return np.linalg.norm(zeta[None, :] - r * sig, axis=1) ** (-a)
        lhs, _ = adaptive_sphere_integral(integrand, zeta, q, n_phi, sing, rtol)
        return lhs, rhs

    def F(t):
        return (rho * rho + r * r - 2 * r * rho * t) ** (-a / 2)
    prev = None
    levels = 0
    while True:
        val = _zonal_integral(F, d, q, levels, sing)
        if prev is not None and abs(val - prev) < rtol * abs(val):
            return val, rhs
        if levels > 48:
            raise QuadratureConvergenceError("zonal sphere quadrature did not converge")
        prev = val
        levels = 1 if levels == 0 else levels + 2
