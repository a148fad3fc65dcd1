"""Tabulated gain multiplier m(xi, zeta) and its persisted form.

m depends on r = |xi|, rho = |zeta| and c = cos(xi, zeta) only, and it is
homogeneous of degree -a (a = d - lambda). Near the sphere rho = r it is
singular (logarithmically at lambda = 1), with local behaviour b(c) times the
isotropic multiplier. The table therefore stores the bounded remainder

    E(tau, c) = (r + rho)^a [m(r, rho, c) - b(c) m_iso(r, rho)],  tau = rho/(r + rho),

on a (tau, c) grid, and evaluates m = b(c) m_iso + (r + rho)^(-a) E. For an
isotropic b the remainder vanishes identically.
"""

from __future__ import annotations

import hashlib
import json
import math
import zipfile
from dataclasses import dataclass, field

import numpy as np

from .gain import aniso_factors, isotropic_weight_table
from .grid import VelocityGrid
from .kernels import SoftPotentialKernel, kernel_m, m_isotropic
from .sphere import adaptive_sphere_integral

FORMAT_VERSION = 1
QUAD_SPEC = {"sphere": "gauss-legendre x trapezoid 32x64, dyadic pole refinement, rtol 1e-4",
             "cells": "gauss 6^3, 2^3 sub-cells on the sphere, band 3.5"}


class StaleTableError(ValueError):
    """A persisted table does not match the requested kernel or build settings."""


class TableValidationError(RuntimeError):
    """Probe validation of an interpolated table failed."""


def _tau_nodes(count: int) -> np.ndarray:
    """Nodes on [0, 1] clustered quadratically towards the singular ridge tau = 1/2.

    An even count keeps the ridge itself off the node set.
    """
    if count % 2:
        count += 1
    s = np.linspace(-1, 1, count)
    return 0.5 + 0.5 * np.sign(s) * np.abs(s) ** 2


def expected_hash(kernel: SoftPotentialKernel, resolutions) -> str:
    head = {"kernel": kernel.identity(), "resolutions": list(resolutions), "order": 1,
            "quad": QUAD_SPEC, "version": FORMAT_VERSION}
    return hashlib.sha256(json.dumps(head, sort_keys=True).encode()).hexdigest()


@dataclass(eq=False)
class MultiplierTable:
    kernel: SoftPotentialKernel
    tau_nodes: np.ndarray
    c_nodes: np.ndarray
    remainder: np.ndarray
    btab: np.ndarray
    resolutions: tuple
    build_hash: str
    validation_error: float = float("nan")
    order: int = 1
    weights: dict = field(default_factory=dict)
    factors: dict = field(default_factory=dict, repr=False)

    @property
    def isotropic(self) -> bool:
        return bool(self.kernel.angular.isotropic)

    def header(self) -> dict:
        return {"lambda": self.kernel.lam, "d": self.kernel.d, "b": self.kernel.angular.identifier,
                "p": self.kernel.identity()["p"], "resolutions": list(self.resolutions),
                "order": self.order, "quad": QUAD_SPEC, "build_hash": self.build_hash,
                "validation_error": self.validation_error, "version": FORMAT_VERSION}

    def remainder_at(self, tau, c) -> np.ndarray:
        """Bilinear interpolation of E(tau, c)."""
        tau = np.clip(np.asarray(tau, float), 0, 1)
        c = np.clip(np.asarray(c, float), -1, 1)
        i = np.clip(np.searchsorted(self.tau_nodes, tau, side="right") - 1, 0, len(self.tau_nodes) - 2)
        t = (tau - self.tau_nodes[i]) / (self.tau_nodes[i + 1] - self.tau_nodes[i])
        nc = len(self.c_nodes)
        x = (c + 1) * 0.5 * (nc - 1)
        k = np.clip(np.floor(x).astype(int), 0, nc - 2)
        s = x - k
        E = self.remainder
        return ((E[i, k] * (1 - s) + E[i, k + 1] * s) * (1 - t)
                + (E[i + 1, k] * (1 - s) + E[i + 1, k + 1] * s) * t)

    def evaluate(self, r, rho, c) -> np.ndarray:
        """m(r, rho, c) from the table."""
        r = np.asarray(r, float)
        rho = np.asarray(rho, float)
        lam = self.kernel.lam
        base = self.kernel.angular(np.clip(c, -1, 1)) * m_isotropic(r, rho, lam)
        if self.isotropic:
            return base
        tau = np.where(r + rho > 0, rho / np.where(r + rho > 0, r + rho, 1), 0.0)
        return base + (r + rho) ** (-self.kernel.a) * self.remainder_at(tau, c)

    def gain_weights(self, grid: VelocityGrid):
        """Isotropic lattice weights for this grid (built once, cached)."""
        if grid.d != 3:
            raise NotImplementedError("the gain term is implemented for d = 3")
        key = f"w_{grid.n}_{grid.extent!r}"
        if key not in self.weights:
            self.weights[key] = isotropic_weight_table(self.kernel.lam, grid.n, grid.extent)
        return self.weights[key]

    def anisotropic_factors(self, grid: VelocityGrid) -> np.ndarray:
        """Per-pair rescaling of the lattice weights for an anisotropic b.

        Kept in memory only ((n-1)^6 doubles, about 90 MB at n = 16).
        """
        key = f"a_{grid.n}_{grid.extent!r}"
        if key not in self.factors:
            self.factors[key] = aniso_factors(grid.n, self.kernel.norm_l1 / (4 * np.pi), grid.dxi,
                                              self.kernel.a, self.btab, self.tau_nodes, self.remainder)
        return self.factors[key]

    # persistence --------------------------------------------------------------
    def save(self, path) -> None:
        arrays = {"tau_nodes": self.tau_nodes, "c_nodes": self.c_nodes,
                  "remainder": self.remainder, "btab": self.btab}
        for key, (row, tab, lookup) in self.weights.items():
            arrays[key + "_row"] = row
            arrays[key + "_tab"] = tab
            arrays[key + "_lookup"] = lookup
        head = self.header()
        head["weights"] = sorted(self.weights)
        head["data_sha256"] = _data_digest(arrays)
        with open(path, "wb") as fh:
            np.savez(fh, header=np.array(json.dumps(head, sort_keys=True)), **arrays)

    @classmethod
    def load(cls, path, kernel: SoftPotentialKernel) -> "MultiplierTable":
        with np.load(path, allow_pickle=False) as z:
            head = json.loads(str(z["header"]))
            arrays = {k: z[k] for k in z.files if k != "header"}
        want = expected_hash(kernel, head["resolutions"])
        if head.get("build_hash") != want:
            raise StaleTableError(f"table {path} was built for {head.get('b')}, lambda={head.get('lambda')} "
                                  f"(hash {head.get('build_hash', '')[:12]}), expected hash {want[:12]}")
        if head.get("data_sha256") != _data_digest(arrays):
            raise StaleTableError(f"table {path} data checksum mismatch")
        weights = {}
        for key in head.get("weights", []):
            weights[key] = (arrays[key + "_row"], arrays[key + "_tab"], arrays[key + "_lookup"])
        return cls(kernel, arrays["tau_nodes"], arrays["c_nodes"], arrays["remainder"], arrays["btab"],
                   tuple(head["resolutions"]), head["build_hash"], head["validation_error"],
                   head["order"], weights)


def _data_digest(arrays: dict) -> str:
    h = hashlib.sha256()
    for k in sorted(arrays):
        h.update(k.encode())
        h.update(np.ascontiguousarray(arrays[k]).tobytes())
    return h.hexdigest()


def _remainder_node(kernel: SoftPotentialKernel, tau: float, c: float) -> float:
    """E(tau, c) at r + rho = 1 by direct sphere quadrature of (b(xh.s) - b(c)) |zeta - r s|^(-a)."""
    a = kernel.a
    b = kernel.angular
    if tau <= 0.0 or tau >= 1.0:
        return kernel.norm_l1 - 4 * np.pi * float(b(c))
    r, rho = 1.0 - tau, tau
    xh = np.array([0.0, 0.0, 1.0])
    zeta = rho * np.array([math.sqrt(max(0.0, 1 - c * c)), 0.0, c])
    bc = float(b(c))

    def integrand(sig):
        dist = np.linalg.norm(zeta[None, :] - r * sig, axis=1)
        return (b(sig @ xh) - bc) * dist ** (-a)
    val, _ = adaptive_sphere_integral(integrand, zeta / rho, 32, 64, 0.0, 1e-5, fail_rtol=1e-3)
    return val


def build_multiplier_table(kernel: SoftPotentialKernel, grid: VelocityGrid | None = None,
                           resolutions=(32, 33), probes: int = 100, seed: int = 0,
                           tolerance: float = 1e-2, weights: bool = True) -> MultiplierTable:
    """Tabulate m for ``kernel``, validate against direct quadrature and, when a
    grid is given, precompute its lattice weights.

    Validation draws ``probes`` random (r, rho, c) with r, rho up to the
    diameter of the half-lattice used by the gain term and requires a relative
    error of at most ``tolerance`` against ``kernel_m``.
    """
    if kernel.d != 3:
        raise NotImplementedError("multiplier tables are implemented for d = 3")
    n_tau, n_c = (int(x) for x in resolutions)
    if min(n_tau, n_c) < 16:
        raise ValueError("table resolutions must be at least 16 per axis")
    tau = _tau_nodes(n_tau)
    cn = np.linspace(-1, 1, n_c)
    if kernel.angular.isotropic:
        rem = np.zeros((tau.size, n_c))
    else:
        rem = np.array([[_remainder_node(kernel, t, c) for c in cn] for t in tau])
    btab = np.asarray(kernel.angular(np.linspace(-1, 1, 4097)), float)
    table = MultiplierTable(kernel, tau, cn, rem, btab, (n_tau, n_c), expected_hash(kernel, (n_tau, n_c)))
    diam = math.sqrt(3) * (grid.n - 2) / (4 * grid.extent) if grid is not None else 2.0
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(probes):
        r, rho = rng.uniform(0.02 * diam, diam, 2)
        c = rng.uniform(-1, 1)
        xi = np.array([0.0, 0.0, r])
        zeta = rho * np.array([math.sqrt(1 - c * c), 0.0, c])
        ref = kernel_m(kernel, xi, zeta)
        got = float(table.evaluate(r, rho, c))
        worst = max(worst, abs(got - ref) / abs(ref))
    table.validation_error = worst
    if worst > tolerance:
        raise TableValidationError(f"multiplier table probe error {worst:.3e} exceeds {tolerance:g}")
    if grid is not None and weights:
        table.gain_weights(grid)
    return table


def cached_table(kernel: SoftPotentialKernel, grid: VelocityGrid, cache_dir, **build_kw) -> MultiplierTable:
    """Load the table for ``kernel`` from ``cache_dir`` or build and store it.

    The file name carries the kernel digest; a stale (hash mismatch) or
    unreadable file is rebuilt. Lattice weights for ``grid`` are added to the file when missing.
    """
    from pathlib import Path
    d = Path(cache_dir)
    d.mkdir(parents=True, exist_ok=True)
    path = d / f"m_{kernel.digest()[:16]}.npz"
    table = None
    if path.exists():
        try:
            table = MultiplierTable.load(path, kernel)
        except (StaleTableError, OSError, ValueError, KeyError, zipfile.BadZipFile):
            table = None  # stale or unreadable: rebuild
    if table is None:
        table = build_multiplier_table(kernel, grid, **build_kw)
        table.save(path)
        return table
    key = f"w_{grid.n}_{grid.extent!r}"
    if key not in table.weights:
        table.gain_weights(grid)
        table.save(path)
    return table
