"""Collision operator Q = Q+ - Q- for B = |v - v*|^(-lambda) b(k.sigma), d = 3.

Q+ is evaluated from the Bobylev form

    [Q+(f, g)]^(2 xi) = c_lambda int m(xi, zeta) f^(xi + zeta) g^(xi - zeta) dzeta

as a lattice sum over pairs of input frequencies (see ``gain``), and Q- as
||b||_1 f times the frequency-side Riesz potential of g. Both use the same
zeta-corrected weights at the point singularity, which makes the discrete
mass of Q(f, g) + Q(g, f) vanish to round-off. ``q_plus_oracle`` is an
independent direct quadrature of the collision integral in velocity space.
"""

from __future__ import annotations

import math
import warnings

import numba
import numpy as np
from scipy import ndimage

from .gain import NO_FACTORS, _gain_sum, fold_aliases
from .grid import DensityField, SpectralField, VelocityGrid, evaluate_trig, hdot_norm, norms, random_mixture
from .hypotheses import Condition, HypothesisError, admissible, alpha_plus
from .kernels import SoftPotentialKernel
from .lattice import singular_weights
from .multiplier import MultiplierTable, build_multiplier_table
from .riesz import riesz_potential_fourier
from .sphere import _gauss

ALIAS_LIMIT = 0.01
ORACLE_MAX_N = 8


class AliasingWarning(UserWarning):
    """Input spectra carry significant energy in the outer half of the lattice."""


def outer_energy_fraction(F: SpectralField) -> float:
    """Share of sum |F|^2 on indices with some |k_i| >= n/4."""
    g = F.grid
    k = np.abs(g.frequency_indices())
    outer = np.zeros(g.shape, dtype=bool)
    for ax in range(g.d):
        shape = [1] * g.d
        shape[ax] = g.n
        outer |= (k >= g.n // 4).reshape(shape)
    e = np.abs(F.coefficients) ** 2
    tot = e.sum()
    return float(e[outer].sum() / tot) if tot > 0 else 0.0


def _check_inputs(kernel: SoftPotentialKernel, f: DensityField, g: DensityField) -> VelocityGrid:
    if f.grid != g.grid:
        raise ValueError(f"fields live on different grids: {f.grid} vs {g.grid}")
    if f.grid.d != kernel.d:
        raise ValueError(f"kernel dimension {kernel.d} does not match grid dimension {f.grid.d}")
    if kernel.d != 3:
        raise NotImplementedError("the collision operator is implemented for d = 3")
    return f.grid


def _alias_status(f: DensityField, g: DensityField) -> str:
    frac = max(outer_energy_fraction(f.spectral), outer_energy_fraction(g.spectral))
    if frac > ALIAS_LIMIT:
        warnings.warn(f"{frac:.2%} of the input spectral energy lies in the outer half of the lattice",
                      AliasingWarning, stacklevel=3)
        return "aliasing-warning"
    return "ok"


def _inner(F: np.ndarray) -> np.ndarray:
    """Coefficients with |k_i| <= n/2 - 1 (the unpaired Nyquist planes dropped)."""
    return np.ascontiguousarray(F[1:, 1:, 1:], dtype=np.complex128)


def q_plus_coefficients(kernel: SoftPotentialKernel, f: DensityField, g: DensityField,
                        table: MultiplierTable) -> np.ndarray:
    """Spectral coefficients of Q+(f, g) on the dual lattice (centered order)."""
    grid = _check_inputs(kernel, f, g)
    if table.kernel.identity() != kernel.identity():
        raise ValueError("multiplier table was built for a different kernel")
    row, tab, lookup = table.gain_weights(grid)
    factors = NO_FACTORS if table.isotropic else table.anisotropic_factors(grid)
    acc = _gain_sum(_inner(f.spectral.coefficients), _inner(g.spectral.coefficients), tab, row, lookup,
                    grid.n, kernel.norm_l1 / (4 * np.pi), factors)
    return fold_aliases(acc, grid.n) * kernel.riesz


def q_plus(kernel: SoftPotentialKernel, f: DensityField, g: DensityField,
           table: MultiplierTable) -> DensityField:
    """Gain term on the grid. The status is 'aliasing-warning' when more than 1%
    of either input's spectral energy lies in the outer half of the lattice."""
    status = _alias_status(f, g)
    F = q_plus_coefficients(kernel, f, g, table)
    vals = np.fft.ifftn(np.fft.ifftshift(F * _sign(f.grid))).real * (f.grid.n * f.grid.dxi) ** 3
    return DensityField(f.grid, vals, status)


def _sign(grid: VelocityGrid) -> np.ndarray:
    k = grid.frequency_indices()
    s = (-1.0) ** k
    return s[:, None, None] * s[None, :, None] * s[None, None, :]


def q_minus(kernel: SoftPotentialKernel, f: DensityField, g: DensityField) -> DensityField:
    """Loss term ||b||_1 f(v) int |v - w|^(-lambda) g(w) dw, potential taken on the frequency side."""
    _check_inputs(kernel, f, g)
    status = _alias_status(f, g)
    pot = riesz_potential_fourier(g, kernel.lam)
    return DensityField(f.grid, kernel.norm_l1 * f.values * pot, status)


def q_total(kernel: SoftPotentialKernel, f: DensityField, g: DensityField,
            table: MultiplierTable) -> DensityField:
    qp = q_plus(kernel, f, g, table)
    qm = q_minus(kernel, f, g)
    status = "ok" if qp.status == qm.status == "ok" else "aliasing-warning"
    return DensityField(f.grid, qp.values - qm.values, status)


# -- direct quadrature oracle -------------------------------------------------

@numba.njit(cache=True)
def _bweights(t):
    w = np.empty(4)
    s = 1.0 - t
    w[0] = s * s * s / 6.0
    w[1] = (3.0 * t * t * t - 6.0 * t * t + 4.0) / 6.0
    w[2] = (-3.0 * t * t * t + 3.0 * t * t + 3.0 * t + 1.0) / 6.0
    w[3] = t * t * t / 6.0
    return w


@numba.njit(cache=True)
def _bspline3(coef, x, y, z):
    """Cubic B-spline evaluation at fractional array indices; zero outside."""
    nx, ny, nz = coef.shape
    ix = int(math.floor(x))
    iy = int(math.floor(y))
    iz = int(math.floor(z))
    if ix < 1 or iy < 1 or iz < 1 or ix > nx - 3 or iy > ny - 3 or iz > nz - 3:
        return 0.0
    wx = _bweights(x - ix)
    wy = _bweights(y - iy)
    wz = _bweights(z - iz)
    acc = 0.0
    for a in range(4):
        for b in range(4):
            wab = wx[a] * wy[b]
            for c in range(4):
                acc += wab * wz[c] * coef[ix - 1 + a, iy - 1 + b, iz - 1 + c]
    return acc


@numba.njit(cache=True)
def _oracle_point(v, us, uw, cf, cg, origin, step, t_nodes, t_w, n_phi, btab, lam):
    """sum_u w(u) int b(k.sigma) f(v') g(v*') dsigma, w the corrected |u|^(-lambda) weights."""
    total = 0.0
    for m in range(us.shape[0]):
        u0 = us[m, 0]
        u1 = us[m, 1]
        u2 = us[m, 2]
        un = math.sqrt(u0 * u0 + u1 * u1 + u2 * u2)
        c0 = v[0] - 0.5 * u0
        c1 = v[1] - 0.5 * u1
        c2 = v[2] - 0.5 * u2
        if un == 0.0:
            fv = _bspline3(cf, (c0 - origin) / step, (c1 - origin) / step, (c2 - origin) / step)
            gv = _bspline3(cg, (c0 - origin) / step, (c1 - origin) / step, (c2 - origin) / step)
            bint = 0.0
            for i in range(t_nodes.shape[0]):
                bint += t_w[i] * _interp(btab, t_nodes[i])
            total += uw[m] * 2.0 * math.pi * bint * fv * gv
            continue
        p0 = u0 / un
        p1 = u1 / un
        p2 = u2 / un
        # frame (e1, e2, p)
        if abs(p0) < 0.9:
            h0, h1, h2 = 1.0, 0.0, 0.0
        else:
            h0, h1, h2 = 0.0, 1.0, 0.0
        e0 = p1 * h2 - p2 * h1
        e1_ = p2 * h0 - p0 * h2
        e2 = p0 * h1 - p1 * h0
        en = math.sqrt(e0 * e0 + e1_ * e1_ + e2 * e2)
        e0 /= en
        e1_ /= en
        e2 /= en
        g0 = p1 * e2 - p2 * e1_
        g1 = p2 * e0 - p0 * e2
        g2 = p0 * e1_ - p1 * e0
        half = 0.5 * un
        sph = 0.0
        for i in range(t_nodes.shape[0]):
            t = t_nodes[i]
            st = math.sqrt(max(0.0, 1.0 - t * t))
            bt = _interp(btab, t)
            ring = 0.0
            for k in range(n_phi):
                phi = 2.0 * math.pi * k / n_phi
                cp = math.cos(phi) * st
                sp = math.sin(phi) * st
                s0 = cp * e0 + sp * g0 + t * p0
                s1 = cp * e1_ + sp * g1 + t * p1
                s2 = cp * e2 + sp * g2 + t * p2
                fv = _bspline3(cf, (c0 + half * s0 - origin) / step, (c1 + half * s1 - origin) / step,
                               (c2 + half * s2 - origin) / step)
                if fv == 0.0:
                    continue
                gv = _bspline3(cg, (c0 - half * s0 - origin) / step, (c1 - half * s1 - origin) / step,
                               (c2 - half * s2 - origin) / step)
                ring += fv * gv
            sph += t_w[i] * bt * ring
        total += uw[m] * sph * (2.0 * math.pi / n_phi)
    return total


@numba.njit(cache=True)
def _interp(btab, t):
    m = btab.shape[0] - 1
    x = (t + 1.0) * 0.5 * m
    if x <= 0.0:
        return btab[0]
    if x >= m:
        return btab[m]
    i = int(x)
    s = x - i
    return btab[i] * (1.0 - s) + btab[i + 1] * s


def _spline_coefficients(f: DensityField, upsample: int):
    """Trigonometric upsampling followed by cubic B-spline prefiltering.

    Returns (coefficients, origin, step); two zero layers pad the box so the
    interpolant decays to zero just outside it.
    """
    grid = f.grid
    m = grid.n * upsample
    step = 2 * grid.extent / m
    x = -grid.extent + step * np.arange(m)
    vals = evaluate_trig(f.spectral, [x] * 3).real
    pad = 3
    vals = np.pad(vals, pad)
    coef = ndimage.spline_filter(vals, order=3, mode="constant")
    return np.ascontiguousarray(coef), -grid.extent - pad * step, step


def q_plus_oracle(kernel: SoftPotentialKernel, f: DensityField, g: DensityField, sample_points,
                  quad_spec=(16, 32), refine: int = 2, upsample: int = 4) -> np.ndarray:
    """Direct quadrature of int int |v - v*|^(-lambda) b(k.sigma) f(v') g(v*') dsigma dv*.

    The outer integral runs over the lattice u = v - v* in (h/refine) Z^3 with
    zeta-corrected weights at u = 0; the sphere integral uses ``quad_spec`` =
    (Gauss nodes in k.sigma, trapezoid nodes in azimuth). f and g are
    evaluated at post-collision velocities by trigonometric upsampling and
    cubic splines, and vanish outside the box. Only u with
    |v*|^2 <= 6 R^2 - |v|^2 can contribute (energy conservation).
    """
    grid = _check_inputs(kernel, f, g)
    if grid.n > ORACLE_MAX_N:
        raise ValueError(f"q_plus_oracle is restricted to n <= {ORACLE_MAX_N} (got n={grid.n})")
    pts = np.atleast_2d(np.asarray(sample_points, float))
    if pts.shape[1] != 3:
        raise ValueError("sample points must be 3-vectors")
    q_t, n_phi = (int(x) for x in quad_spec)
    cf, origin, step = _spline_coefficients(f, upsample)
    cg = cf if g is f else _spline_coefficients(g, upsample)[0]
    t_nodes, t_w = _gauss(q_t)
    btab = np.asarray(kernel.angular(np.linspace(-1, 1, 8193)), float)
    hu = grid.h / refine
    reach = 3 * (grid.extent + 2 * step) ** 2  # squared radius of the interpolants' support
    out = np.empty(len(pts))
    for i, v in enumerate(pts):
        vs_max2 = max(2 * reach - v @ v, 0.0)
        M = int(math.ceil((math.sqrt(vs_max2) + np.linalg.norm(v)) / hu)) + 1
        w = singular_weights((2 * M + 1,) * 3, (M, M, M), hu, kernel.lam)
        idx = np.arange(-M, M + 1) * hu
        U = np.stack(np.meshgrid(idx, idx, idx, indexing="ij"), -1).reshape(-1, 3)
        keep = ((v[None, :] - U) ** 2).sum(1) <= vs_max2
        us = np.ascontiguousarray(U[keep])
        uw = np.ascontiguousarray(w.ravel()[keep])
        out[i] = _oracle_point(np.asarray(v, float), us, uw, cf, cg, origin, step, t_nodes, t_w,
                               n_phi, btab, kernel.lam)
    return out


# -- bilinear constants -------------------------------------------------------

def gate_conditions(kernel: SoftPotentialKernel, alpha: float) -> list:
    """Named hypotheses for the bilinear estimates: the ranges of ``admissible``
    plus alpha > alpha_+(lambda) in the p >= 2 regime."""
    _, conds = admissible(kernel.d, kernel.lam, alpha, kernel.p)
    if not 1 < kernel.p < 2 and 0.5 < kernel.lam < kernel.d:
        ap = alpha_plus(kernel.lam, kernel.d)
        conds.append(Condition("alpha > alpha_+(lambda)", alpha > ap, "Corollary 5",
                               f"alpha={alpha:g}, alpha_+={ap:g}"))
    return conds


def estimate_constants(kernel: SoftPotentialKernel, alpha: float, grid: VelocityGrid,
                       count: int = 50, seed: int = 0, table: MultiplierTable | None = None,
                       safety: float = 1.25, components: int = 3, fields=None) -> dict:
    """Empirical bilinear constants over a family of random nonnegative mixtures.

    C_I = max ||Q(f,g)||_1 / (||b||_p ||f||_X ||g||_X), C_R the same with the
    H^alpha seminorm of Q(f,g), K_b = max(C_I, C_R) ||b||_p safety. The
    quadratic refinement ratio ||Q(f,f)||_H / (||b|| ||f||_1^(1-theta) ||f||_H^(1+theta)),
    theta = 2 lambda / (d + 2 alpha), is reported alongside.
    """
    conds = gate_conditions(kernel, alpha)
    failed = [c for c in conds if not c.passed]
    if failed:
        raise HypothesisError(failed)
    if table is None:
        table = build_multiplier_table(kernel, grid, probes=20)
    rng = np.random.default_rng(seed)
    if fields is None:
        fields = [random_mixture(grid, rng, components) for _ in range(2 * count)]
    pairs = [(fields[2 * i], fields[2 * i + 1]) for i in range(len(fields) // 2)]
    bp = kernel.norm_lp
    d = kernel.d
    theta = 2 * kernel.lam / (d + 2 * alpha)
    ci, cr, qr2 = [], [], []
    for f, g in pairs:
        nf, ng = norms(f, alpha), norms(g, alpha)
        q = q_total(kernel, f, g, table)
        nq = norms(q, alpha)
        den = bp * nf.x_alpha * ng.x_alpha
        ci.append(nq.l1 / den)
        cr.append(nq.hdot_alpha / den)
        qff = q_total(kernel, f, f, table)
        qr2.append(hdot_norm(qff.spectral, alpha)
                   / (bp * nf.l1 ** (1 - theta) * nf.hdot_alpha ** (1 + theta)))
    ci, cr, qr2 = np.array(ci), np.array(cr), np.array(qr2)
    half = max(1, len(ci) // 2)
    C_I, C_R = float(ci.max()), float(cr.max())
    return {
        "C_I": C_I,
        "C_R": C_R,
        "K_b": max(C_I, C_R) * bp * safety,
        "safety": safety,
        "norm_lp": bp,
        "theta": theta,
        "qr2_max": float(qr2.max()),
        "count": len(pairs),
        "stability": {"C_I_first_half": float(ci[:half].max()), "C_R_first_half": float(cr[:half].max())},
        "ratios": {"C_I": ci.tolist(), "C_R": cr.tolist(), "qr2": qr2.tolist()},
        "conditions": [c.as_dict() for c in conds],
    }
