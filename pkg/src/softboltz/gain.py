"""Lattice quadrature for the Bobylev form of the gain term.

For output index K (so 2 xi = K/(2R)) and input indices a, b = K - a the
frequency zeta = (a - b)/(4R) = j/(4R) runs over a lattice of spacing
delta = 1/(2R). The weight attached to a pair is an approximation of the cell
integral of m(xi, .) around zeta_j. For the isotropic multiplier
m_iso(r, rho) = int |zeta - r sigma|^(lambda-3) dsigma the weight depends only
on |K|^2 and on the sorted absolute values of j, which is what the tables
below store.

Three regimes are used:
  * K = 0: m = ||b||_1 |zeta|^(lambda-3), a point singularity, handled with
    zeta-corrected weights (see ``lattice``);
  * cells far from the sphere |zeta| = r: midpoint value m delta^3;
  * cells within ``band`` cells of the sphere: product-integration weights
    built from the cell moments of m (orders 0, 1, 2) followed by summation
    by parts, so that sum W h(zeta_j) reproduces int m h to second order in
    the smooth factor h. Cells crossed by the sphere are split into 2^3
    sub-cells for the moment quadrature.
"""

from __future__ import annotations

import functools
import math

import numba
import numpy as np

from .kernels import m_isotropic
from .lattice import singular_weights


def jclass_count(J: int) -> int:
    return (J + 1) * (J + 2) * (J + 3) // 6


def jclass_index(x, y, z):
    """Index of a sorted triple 0 <= x <= y <= z."""
    return z * (z + 1) * (z + 2) // 6 + y * (y + 1) // 2 + x


def jclass_lookup(J: int) -> np.ndarray:
    """lookup[|j1|, |j2|, |j3|] -> class index."""
    r = np.arange(J + 1)
    A = np.stack(np.meshgrid(r, r, r, indexing="ij"), -1)
    S = np.sort(A, axis=-1)
    return jclass_index(S[..., 0], S[..., 1], S[..., 2]).astype(np.int64)


def jclass_triples(J: int) -> np.ndarray:
    out = np.empty((jclass_count(J), 3), dtype=np.int64)
    for z in range(J + 1):
        for y in range(z + 1):
            for x in range(y + 1):
                out[jclass_index(x, y, z)] = (x, y, z)
    return out


@functools.lru_cache(maxsize=8)
def _cell_rule(q: int, sub: int):
    """Offsets (in cell units, centered) and weights of a product Gauss rule on [-1/2, 1/2]^3."""
    x, w = np.polynomial.legendre.leggauss(q)
    x = x / (2 * sub)
    w = w / (2 * sub)
    centers = (np.arange(sub) + 0.5) / sub - 0.5
    pts1 = (centers[:, None] + x[None, :]).ravel()
    w1 = np.tile(w, sub)
    P = np.stack(np.meshgrid(pts1, pts1, pts1, indexing="ij"), -1).reshape(-1, 3)
    W = np.einsum("i,j,k->ijk", w1, w1, w1).ravel()
    return P, W


def cell_moments(r: float, centers: np.ndarray, delta: float, lam: float, q: int = 6,
                 sub_crossing: int = 2, chunk: int = 4096):
    """Moments of m_iso(r, |zeta|) over cubes of side delta about ``centers``.

    Returns (W, M1, M2): int m, int m (zeta - c), int m (zeta - c)(zeta - c)^T.
    """
    N = len(centers)
    W = np.empty(N)
    M1 = np.empty((N, 3))
    M2 = np.empty((N, 3, 3))
    if N == 0:
        return W, M1, M2
    rho_c = np.linalg.norm(centers, axis=1)
    crossing = np.abs(rho_c - r) < (math.sqrt(3) / 2 + 1e-9) * delta
    for flag, sub in ((False, 1), (True, sub_crossing)):
        sel = np.nonzero(crossing == flag)[0]
        if sel.size == 0:
            continue
        P, PW = _cell_rule(q, sub)
        off = P * delta
        for s in range(0, sel.size, chunk):
            idx = sel[s:s + chunk]
            pts = centers[idx, None, :] + off[None, :, :]
            mv = m_isotropic(r, np.linalg.norm(pts, axis=2), lam) * (PW * delta**3)[None, :]
            W[idx] = mv.sum(1)
            M1[idx] = mv @ off
            M2[idx] = np.einsum("cp,pi,pj->cij", mv, off, off)
    return W, M1, M2


_NEIGHBOURS = np.array([(0, 0, 0)] + [tuple(s * e) for e in np.eye(3, dtype=int) for s in (1, -1)]
                       + [tuple(si * np.eye(3, dtype=int)[i] + sk * np.eye(3, dtype=int)[k])
                          for i in range(3) for k in range(i + 1, 3) for si in (1, -1) for sk in (1, -1)],
                       dtype=np.int64)


def _keys(cells: np.ndarray, J: int) -> np.ndarray:
    base = 2 * J + 8
    c = cells + (J + 4)
    return (c[:, 0] * base + c[:, 1]) * base + c[:, 2]


def corrected_weights(r: float, cells: np.ndarray, delta: float, lam: float, q: int = 6,
                      sub_crossing: int = 2, shift=0.0) -> np.ndarray:
    """Product-integration weights for the cells with integer indices ``cells``.

    A cell with index vector i has center i * delta + shift; its lattice neighbours are
    i +- e_k. The moments of every cell touched by the stencil are computed
    once and combined by summation by parts.
    """
    cells = np.asarray(cells, dtype=np.int64)
    J = int(np.abs(cells).max(initial=0)) + 2
    allc = (cells[:, None, :] + _NEIGHBOURS[None, :, :]).reshape(-1, 3)
    keys = _keys(allc, J)
    ukeys, first = np.unique(keys, return_index=True)
    ucells = allc[first]
    W, M1, M2 = cell_moments(r, ucells * delta + shift, delta, lam, q, sub_crossing)

    def at(offset):
        return np.searchsorted(ukeys, _keys(cells + np.asarray(offset, dtype=np.int64), J))

    E = np.eye(3, dtype=np.int64)
    c0 = at((0, 0, 0))
    out = W[c0].copy()
    for i in range(3):
        p = at(E[i])
        m = at(-E[i])
        out += (M1[m, i] - M1[p, i]) / (2 * delta)
        out += (M2[m, i, i] - 2 * M2[c0, i, i] + M2[p, i, i]) / (2 * delta**2)
        for k in range(i + 1, 3):
            s = 0.0
            for si, sk, sg in ((1, 1, 1), (1, -1, -1), (-1, 1, -1), (-1, -1, 1)):
                s = s + sg * M2[at(-si * E[i] - sk * E[k]), i, k]
            out += s / (4 * delta**2)
    return out


def isotropic_weight_table(lam: float, n: int, extent: float, band: float = 3.5,
                           q: int = 6, precise_k2: int | None = None):
    """Weights of m_iso for all (|K|^2, sorted |j|) classes on an n-point grid.

    Inputs are the coefficients with |a_i| <= n/2 - 1, so K = a + b and
    j = a - b have components in [-(n-2), n-2]. Classes with
    |K|^2 <= precise_k2 (default: the corner of the standard lattice) receive
    moment-corrected weights; larger |K| only feed aliased tail coefficients
    and use plain cell averages near the sphere.

    Returns (row_of_k2, table, lookup) where table[row_of_k2[|K|^2], lookup[|j|]]
    is the weight (in units where the Riesz constant and the angular factor
    are applied later). The K = 0 row carries 4 pi times the zeta-corrected
    weights of |zeta|^(lambda-3).
    """
    J = n - 2
    delta = 1.0 / (2 * extent)
    a = 3.0 - lam
    if precise_k2 is None:
        precise_k2 = 3 * (n // 2) ** 2
    lookup = jclass_lookup(J)
    triples = jclass_triples(J)
    nodd = (triples % 2).sum(1)
    rng = np.arange(-J, J + 1)
    k2_all = np.unique((rng[:, None, None] ** 2 + rng[None, :, None] ** 2 + rng[None, None, :] ** 2).ravel())
    row_of_k2 = -np.ones(3 * J * J + 1, dtype=np.int64)
    row_of_k2[k2_all] = np.arange(k2_all.size)
    table = np.zeros((k2_all.size, triples.shape[0]))
    zeta_all = triples * (delta / 2)
    rho_all = np.linalg.norm(zeta_all, axis=1)

    # K = 0: j = 2a even, zeta = a delta
    even = nodd == 0
    half = triples[even] // 2
    M = J // 2
    sw = singular_weights((2 * M + 1,) * 3, (M, M, M), delta, a)
    table[0, even] = 4 * np.pi * sw[M + half[:, 0], M + half[:, 1], M + half[:, 2]]

    for row, k2 in enumerate(k2_all):
        if k2 == 0:
            continue
        r = math.sqrt(k2) * delta / 2
        sel = np.nonzero(nodd == (k2 % 4))[0]
        rho = rho_all[sel]
        with np.errstate(divide="ignore"):
            w = m_isotropic(r, rho, lam) * delta**3
        near = np.abs(rho - r) <= band * delta
        if k2 <= precise_k2:
            # cell centers j delta/2 with j of fixed parity: shift to the
            # integer lattice of spacing delta by a half-cell offset
            jn = triples[sel[near]]
            w[near] = _corrected_parity(r, jn, delta, lam, q)
        else:
            cross = np.abs(rho - r) <= 1.0 * delta
            w[cross] = cell_moments(r, zeta_all[sel[cross]], delta, lam, 4, 2)[0]
        table[row, sel] = w
    if not np.all(np.isfinite(table)):
        raise FloatingPointError("non-finite gain weights; widen the near band")
    return row_of_k2, table, lookup


def _corrected_parity(r, jn, delta, lam, q):
    """corrected_weights for cells centered at j delta/2 (all j of one parity pattern)."""
    par = jn % 2
    out = np.empty(len(jn))
    for pat in np.unique(par, axis=0):
        sel = np.all(par == pat, axis=1)
        shift = pat * (delta / 2)
        cells = (jn[sel] - pat) // 2
        out[sel] = corrected_weights(r, cells, delta, lam, q, shift=shift)
    return out


# -- numba kernels ----------------------------------------------------------

@numba.njit(cache=True)
def _interp_b(btab, c):
    m = btab.shape[0] - 1
    x = (c + 1.0) * 0.5 * m
    if x <= 0.0:
        return btab[0]
    if x >= m:
        return btab[m]
    i = int(x)
    t = x - i
    return btab[i] * (1.0 - t) + btab[i + 1] * t


@numba.njit(cache=True)
def _interp_rem(tau_nodes, c_count, rem, tau, c):
    """Bilinear interpolation of rem[tau, c] on nonuniform tau nodes and uniform c."""
    nt = tau_nodes.shape[0]
    lo = 0
    hi = nt - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if tau_nodes[mid] <= tau:
            lo = mid
        else:
            hi = mid
    t = (tau - tau_nodes[lo]) / (tau_nodes[hi] - tau_nodes[lo])
    if t < 0.0:
        t = 0.0
    elif t > 1.0:
        t = 1.0
    x = (c + 1.0) * 0.5 * (c_count - 1)
    i = int(x)
    if i >= c_count - 1:
        i = c_count - 2
    if i < 0:
        i = 0
    s = x - i
    if s < 0.0:
        s = 0.0
    elif s > 1.0:
        s = 1.0
    return ((rem[lo, i] * (1 - s) + rem[lo, i + 1] * s) * (1 - t)
            + (rem[hi, i] * (1 - s) + rem[hi, i + 1] * s) * t)


_G3 = np.array([-math.sqrt(0.6), 0.0, math.sqrt(0.6)])
_G3W = np.array([5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0])


@numba.njit(cache=True)
def _m_iso_point(r, rho, a):
    """Isotropic multiplier at a point (d = 3), see ``kernels.m_isotropic``."""
    if rho == 0.0:
        return 4.0 * math.pi * r ** (-a)
    gap = abs(r - rho)
    if gap < 1e-12 * (r + rho):
        gap = 1e-12 * (r + rho)
    if abs(a - 2.0) < 1e-12:
        return 2.0 * math.pi * math.log((r + rho) / gap) / (r * rho)
    return 2.0 * math.pi * ((r + rho) ** (2.0 - a) - gap ** (2.0 - a)) / (r * rho * (2.0 - a))


@numba.njit(cache=True)
def _aniso_factor(K1, K2, K3, j1, j2, j3, delta, a, btab, tau_nodes, c_count, rem, ridge_sub):
    """Ratio of the cell means of m and of the isotropic multiplier.

    The cell is the zeta-cell of side delta centred at j delta / 2. Both means
    use the same rule (3^3 Gauss points, on ``ridge_sub``^3 sub-cells when the
    cell meets the singular sphere |zeta| = |xi|), so the ridge weighting of
    the isotropic weight is kept while the angular variation of b across the
    cell is resolved.
    """
    h = 0.5 * delta
    x1 = K1 * h
    x2 = K2 * h
    x3 = K3 * h
    r = math.sqrt(x1 * x1 + x2 * x2 + x3 * x3)
    c1 = j1 * h
    c2 = j2 * h
    c3 = j3 * h
    rc = math.sqrt(c1 * c1 + c2 * c2 + c3 * c3)
    sub = ridge_sub if abs(rc - r) < 0.87 * delta else 1
    hs = delta / sub
    num = 0.0
    den = 0.0
    for u1 in range(sub):
        for u2 in range(sub):
            for u3 in range(sub):
                s1 = c1 - h + (u1 + 0.5) * hs
                s2 = c2 - h + (u2 + 0.5) * hs
                s3 = c3 - h + (u3 + 0.5) * hs
                for p in range(3):
                    z1 = s1 + 0.5 * hs * _G3[p]
                    for q in range(3):
                        z2 = s2 + 0.5 * hs * _G3[q]
                        for t in range(3):
                            z3 = s3 + 0.5 * hs * _G3[t]
                            wt = _G3W[p] * _G3W[q] * _G3W[t]
                            rho = math.sqrt(z1 * z1 + z2 * z2 + z3 * z3)
                            mi = _m_iso_point(r, rho, a)
                            den += wt * mi
                            c = (x1 * z1 + x2 * z2 + x3 * z3) / (r * rho) if rho > 0.0 else 0.0
                            tau = rho / (r + rho)
                            num += wt * (_interp_b(btab, c) * mi
                                         + (r + rho) ** (-a) * _interp_rem(tau_nodes, c_count, rem, tau, c))
    return num / den


@numba.njit(cache=True)
def _factor_array(n, k0_scale, delta, a, btab, tau_nodes, rem, ridge_sub):
    h = n // 2 - 1
    m = 2 * h + 1
    out = np.empty((m, m, m, m, m, m))
    c_count = rem.shape[1]
    for a1 in range(-h, h + 1):
        for b1 in range(-h, h + 1):
            for a2 in range(-h, h + 1):
                for b2 in range(-h, h + 1):
                    for a3 in range(-h, h + 1):
                        for b3 in range(-h, h + 1):
                            K1, K2, K3 = a1 + b1, a2 + b2, a3 + b3
                            if K1 == 0 and K2 == 0 and K3 == 0:
                                v = k0_scale
                            else:
                                v = _aniso_factor(K1, K2, K3, a1 - b1, a2 - b2, a3 - b3, delta, a,
                                                  btab, tau_nodes, c_count, rem, ridge_sub)
                            out[a1 + h, b1 + h, a2 + h, b2 + h, a3 + h, b3 + h] = v
    return out


ANISO_MAX_N = 16


def aniso_factors(n, k0_scale, delta, a, btab, tau_nodes, rem, ridge_sub=2):
    """Per-pair rescaling of the isotropic lattice weights for an anisotropic b.

    Each pair (a, b) of input frequencies is one (K, j) cell, so the array has
    (n-1)^6 entries; it is limited to n <= ANISO_MAX_N.
    """
    if n > ANISO_MAX_N:
        raise NotImplementedError(f"anisotropic gain weights are limited to n <= {ANISO_MAX_N}")
    return _factor_array(n, float(k0_scale), float(delta), float(a), np.ascontiguousarray(btab, float),
                         np.ascontiguousarray(tau_nodes, float), np.ascontiguousarray(rem, float), int(ridge_sub))


NO_FACTORS = np.zeros((0, 0, 0, 0, 0, 0))


@numba.njit(cache=True)
def _gain_sum(F, G, table, row_of_k2, lookup, n, k0_scale, factors):
    """acc[K] = sum_{a+b=K} w(K, a-b) F[a] G[b] over |a_i|, |b_i| <= n/2 - 1.

    F, G are (n-1)^3 arrays indexed by a + n/2 - 1; acc is (2n-3)^3 indexed
    by K + n - 2. For an anisotropic b, ``factors`` holds the per-pair
    rescaling of ``aniso_factors`` indexed like (a1, b1, a2, b2, a3, b3);
    otherwise it is empty and every weight is scaled by ``k0_scale``.
    """
    h = n // 2 - 1
    L = 2 * n - 3
    off = n - 2
    acc = np.zeros((L, L, L), dtype=np.complex128)
    anisotropic = factors.size > 0
    for a1 in range(-h, h + 1):
        for b1 in range(-h, h + 1):
            K1 = a1 + b1
            j1 = a1 - b1
            aj1 = abs(j1)
            for a2 in range(-h, h + 1):
                for b2 in range(-h, h + 1):
                    K2 = a2 + b2
                    j2 = a2 - b2
                    aj2 = abs(j2)
                    k12 = K1 * K1 + K2 * K2
                    for a3 in range(-h, h + 1):
                        fa = F[a1 + h, a2 + h, a3 + h]
                        if fa == 0:
                            continue
                        for b3 in range(-h, h + 1):
                            K3 = a3 + b3
                            j3 = a3 - b3
                            k2 = k12 + K3 * K3
                            w = table[row_of_k2[k2], lookup[aj1, aj2, abs(j3)]]
                            if anisotropic:
                                w = w * factors[a1 + h, b1 + h, a2 + h, b2 + h, a3 + h, b3 + h]
                            else:
                                w = w * k0_scale
                            acc[K1 + off, K2 + off, K3 + off] += w * fa * G[b1 + h, b2 + h, b3 + h]
    return acc


def fold_aliases(acc: np.ndarray, n: int) -> np.ndarray:
    """Sum coefficients with K = k mod n onto the standard lattice k in [-n/2, n/2).

    This is the exact relation between the transform of a function and the
    discrete transform of its samples on the grid.
    """
    L = acc.shape[0]
    K = np.arange(L) - (n - 2)
    dest = (K + n // 2) % n
    out = acc
    for ax in range(3):
        moved = np.moveaxis(out, ax, 0)
        folded = np.zeros((n,) + moved.shape[1:], dtype=complex)
        np.add.at(folded, dest, moved)
        out = np.moveaxis(folded, 0, ax)
    return out
