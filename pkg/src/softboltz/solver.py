"""Local existence construction: Picard iteration of

    (A f)(t) = f0 + int_0^t Q(f, f)(s) ds

on the ball Omega_T = {sup_t ||f(t)||_X <= 2 ||f0||_X} with
T = 1 / (5 K_b ||f0||_X), followed by the window-by-window extension
T_{l+1} = T_l + 1 / (5 K_b ||f(T_l)||_X), plus monitors for nonnegativity,
mass conservation, the Gronwall / Bernoulli norm bounds and strong
differentiability in time.

Trajectories are stored on M + 1 uniform nodes per window and the time
integral is the cumulative composite trapezoid rule.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .collision import AliasingWarning, q_total
from .grid import DensityField, NormReport, VelocityGrid, make_grid, norms
from .kernels import SoftPotentialKernel
from .multiplier import MultiplierTable

OMEGA_SLACK = 0.05


class SolverError(RuntimeError):
    """Base class for solver failures; ``diagnostics`` carries the history."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ContractionError(SolverError):
    """Residual ratio above 0.95 for three consecutive iterations (K_b likely too small)."""


class OmegaViolationError(SolverError):
    """An iterate left the ball of radius 2 ||f0||_X (with 5% slack)."""


class WindowError(SolverError):
    """Extension window ``window`` failed; the cause is chained."""

    def __init__(self, window: int, cause: Exception, diagnostics: dict | None = None):
        super().__init__(f"extension window {window} failed: {cause}", diagnostics)
        self.window = window


@dataclass
class SolverState:
    alpha: float
    times: np.ndarray
    fields: list
    norm_history: list
    negmass_history: np.ndarray
    mass0: float
    picard_residuals: list
    fixed_point_residual: float = 0.0
    q_history: list = field(default_factory=list)
    windows: list = field(default_factory=list)
    flags: set = field(default_factory=set)

    @property
    def grid(self) -> VelocityGrid:
        return self.fields[0].grid

    def x_norms(self) -> np.ndarray:
        return np.array([r.x_alpha for r in self.norm_history])

    def residual_ratios(self) -> np.ndarray:
        r = np.asarray(self.picard_residuals, float)
        return r[1:] / r[:-1] if r.size > 1 else np.array([])


@dataclass
class ExistenceEstimate:
    K_b: float
    T: float
    norm0: float
    theta: float | None = None
    T_ell: list = field(default_factory=list)
    provenance: dict = field(default_factory=dict)
    C_R: float | None = None
    gronwall_curve: np.ndarray | None = None
    bernoulli_curve: np.ndarray | None = None

    @property
    def five_T(self) -> float:
        return 5.0 * self.T

    def increments(self) -> np.ndarray:
        """Window lengths, the first being [0, T]."""
        edges = np.concatenate([[0.0], self.T_ell])
        return np.diff(edges)

    def increment_ratios(self) -> np.ndarray:
        inc = self.increments()
        return inc[1:] / inc[:-1]

    def coverage(self) -> float:
        return float(self.T_ell[-1]) if self.T_ell else 0.0

    def as_dict(self) -> dict:
        return {"K_b": self.K_b, "T": self.T, "five_T": self.five_T, "norm0": self.norm0,
                "theta": self.theta, "T_ell": [float(t) for t in self.T_ell], "provenance": self.provenance,
                "C_R": self.C_R}


def existence_time(K_b: float, f0_norms: NormReport, theta: float | None = None,
                   provenance: dict | None = None, C_R: float | None = None) -> ExistenceEstimate:
    """T = 1 / (5 K_b ||f0||_X)."""
    if not K_b > 0:
        raise ValueError(f"K_b must be positive, got {K_b}")
    x = f0_norms.x_alpha
    if not x > 0:
        raise ValueError("the initial datum has zero X^alpha norm")
    T = 1.0 / (5.0 * K_b * x)
    return ExistenceEstimate(K_b=float(K_b), T=T, norm0=x, theta=theta, T_ell=[T],
                             provenance=dict(provenance or {}), C_R=C_R)


def negative_mass(f: DensityField) -> float:
    """N_f = sum max(-f, 0) dv."""
    return float(np.maximum(-f.values, 0.0).sum() * f.grid.dv)


def _q(kernel, table, f, flags):
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", AliasingWarning)
        q = q_total(kernel, f, f, table)
    if caught or q.status != "ok":
        flags.add("aliasing-warning")
    return q


def _cumulative_trapezoid(qs, dt):
    out = [np.zeros_like(qs[0])]
    for m in range(1, len(qs)):
        out.append(out[-1] + 0.5 * dt * (qs[m - 1] + qs[m]))
    return out


def picard_solve(kernel: SoftPotentialKernel, table: MultiplierTable, f0: DensityField, T: float,
                 M: int = 16, tol: float | None = None, alpha: float = 1.0, max_iter: int = 30,
                 t0: float = 0.0, omega_check: bool = True) -> SolverState:
    """Fixed point of the trajectory map on M + 1 uniform nodes of [t0, t0 + T].

    Stops when d_T(f^(j+1), f^(j)) = max_m ||f^(j+1)(t_m) - f^(j)(t_m)||_X < tol
    (default 1e-6 ||f0||_X). One further sweep measures the fixed-point
    residual of the returned trajectory and supplies Q along it.
    """
    if M < 1:
        raise ValueError("M must be positive")
    if not T > 0:
        raise ValueError("T must be positive")
    n0 = norms(f0, alpha)
    x0 = n0.x_alpha
    grid = f0.grid
    times = t0 + T * np.arange(M + 1) / M
    dt = T / M
    flags: set = set()
    if x0 == 0:
        zero = [f0] * (M + 1)
        return SolverState(alpha, times, zero, [n0] * (M + 1), np.zeros(M + 1), f0.mass(), [0.0],
                           0.0, [DensityField(grid, np.zeros(grid.shape))] * (M + 1),
                           [{"t0": float(times[0]), "t1": float(times[-1]), "M": M, "iterations": 0,
                             "residuals": [0.0], "fixed_point_residual": 0.0}], flags)
    if tol is None:
        tol = 1e-6 * x0
    base = f0.values
    traj = [base] * (M + 1)
    q0 = _q(kernel, table, f0, flags).values
    residuals = []
    bound = 2.0 * x0 * (1 + OMEGA_SLACK)
    high = 0

    def sweep(tr):
        qs = [q0] + [_q(kernel, table, DensityField(grid, v), flags).values for v in tr[1:]]
        integ = _cumulative_trapezoid(qs, dt)
        return [base + I for I in integ], qs

    for it in range(max_iter):
        new, _ = sweep(traj)
        d = max(norms(DensityField(grid, a - b), alpha).x_alpha for a, b in zip(new[1:], traj[1:])) if M else 0.0
        residuals.append(d)
        if omega_check:
            top = max(norms(DensityField(grid, v), alpha).x_alpha for v in new)
            if top > bound:
                raise OmegaViolationError(
                    f"iterate {it + 1} has norm {top:.6g} > 2 ||f0||_X (1 + {OMEGA_SLACK:g}) = {bound:.6g}",
                    {"residuals": residuals, "max_norm": top})
        traj = new
        if len(residuals) > 1 and residuals[-1] > 0.95 * residuals[-2]:
            high += 1
            if high >= 3:
                raise ContractionError(
                    "residual ratio above 0.95 for 3 consecutive iterations; K_b is probably underestimated",
                    {"residuals": residuals})
        else:
            high = 0
        if d < tol:
            break
    else:
        raise ContractionError(f"no convergence to {tol:.3g} within {max_iter} iterations",
                               {"residuals": residuals})
    check, qs = sweep(traj)
    fp = max(norms(DensityField(grid, a - b), alpha).x_alpha for a, b in zip(check, traj))
    fields = [DensityField(grid, v) for v in traj]
    fields[0] = f0
    nh = [norms(f, alpha) for f in fields]
    return SolverState(alpha=alpha, times=times, fields=fields, norm_history=nh,
                       negmass_history=np.array([negative_mass(f) for f in fields]), mass0=f0.mass(),
                       picard_residuals=residuals, fixed_point_residual=fp,
                       q_history=[DensityField(grid, q) for q in qs], flags=flags,
                       windows=[{"t0": float(times[0]), "t1": float(times[-1]), "M": M, "iterations": len(residuals),
                                 "residuals": list(residuals), "fixed_point_residual": fp}])


def rk4_solve(kernel: SoftPotentialKernel, table: MultiplierTable, f0: DensityField, T: float,
              steps: int = 16) -> list:
    """Classical RK4 for df/dt = Q(f, f); comparison mode only."""
    flags: set = set()
    f = f0
    out = [f0]
    h = T / steps
    g = f0.grid
    for _ in range(steps):
        k1 = _q(kernel, table, f, flags).values
        k2 = _q(kernel, table, DensityField(g, f.values + 0.5 * h * k1), flags).values
        k3 = _q(kernel, table, DensityField(g, f.values + 0.5 * h * k2), flags).values
        k4 = _q(kernel, table, DensityField(g, f.values + h * k3), flags).values
        f = DensityField(g, f.values + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4))
        out.append(f)
    return out


def _append(state: SolverState, part: SolverState) -> None:
    state.times = np.concatenate([state.times, part.times[1:]])
    state.fields += part.fields[1:]
    state.norm_history += part.norm_history[1:]
    state.negmass_history = np.concatenate([state.negmass_history, part.negmass_history[1:]])
    state.q_history += part.q_history[1:]
    state.picard_residuals = part.picard_residuals
    state.fixed_point_residual = max(state.fixed_point_residual, part.fixed_point_residual)
    state.windows += part.windows
    state.flags |= part.flags


def extend(state: SolverState, estimate: ExistenceEstimate, kernel: SoftPotentialKernel,
           table: MultiplierTable, max_windows: int = 10, M: int | None = None,
           tol_rel: float = 1e-6, max_iter: int = 30):
    """Add up to ``max_windows`` windows T_{l+1} = T_l + 1/(5 K_b ||f(T_l)||_X).

    Each window restarts the Picard iteration from f(T_l). The per-window
    growth factor max_t ||f(t)||_X / ||f(T_l)||_X is recorded against the
    5/4 bound. On failure a WindowError carrying the window index and the
    H^alpha trend is raised.
    """
    if not state.windows:
        raise ValueError("the state has no converged window to extend")
    if M is None:
        M = int(state.windows[-1]["M"])
    for _ in range(max_windows):
        ell = len(estimate.T_ell)
        f_start = state.fields[-1]
        x = state.norm_history[-1].x_alpha
        step = 1.0 / (5.0 * estimate.K_b * x)
        t_start = float(state.times[-1])
        try:
            part = picard_solve(kernel, table, f_start, step, M, tol_rel * x, state.alpha, max_iter, t0=t_start)
        except SolverError as exc:
            trend = [r.hdot_alpha for r in state.norm_history]
            raise WindowError(ell, exc, {"hdot_trend": trend, "times": state.times.tolist(),
                                         **exc.diagnostics}) from exc
        growth = float(part.x_norms().max() / x)
        part.windows[0]["growth"] = growth
        part.windows[0]["cr5_ok"] = growth <= 1.25 * (1 + OMEGA_SLACK)
        _append(state, part)
        estimate.T_ell.append(t_start + step)
    return state, estimate


# -- monitors ---------------------------------------------------------------

def gronwall_bound(estimate: ExistenceEstimate, t) -> np.ndarray:
    t = np.asarray(t, float)
    den = 1.0 - estimate.K_b * estimate.norm0 * t
    return np.where(den > 0, estimate.norm0 / np.where(den > 0, den, 1), np.inf)


def bernoulli_bound(f0_norms: NormReport, C_R_b: float, theta: float, t) -> np.ndarray:
    """||f0||_H / (1 - theta C ||f0||_1^(1-theta) ||f0||_H^theta t)^(1/theta); C includes ||b||."""
    t = np.asarray(t, float)
    den = 1.0 - theta * C_R_b * f0_norms.l1 ** (1 - theta) * f0_norms.hdot_alpha**theta * t
    return np.where(den > 0, f0_norms.hdot_alpha / np.where(den > 0, den, 1) ** (1 / theta), np.inf)


def bounds_report(state: SolverState, estimate: ExistenceEstimate, C_R_b: float | None = None,
                  slack: float = 0.05) -> dict:
    """Measured norms against the Gronwall and Bernoulli curves on [0, T].

    ``C_R_b`` is the constant (times ||b||_p) of the quadratic H^alpha estimate;
    when omitted the Bernoulli curve is not computed.
    """
    t = state.times
    inside = t <= estimate.T * (1 + 1e-12)
    x = state.x_norms()
    h = np.array([r.hdot_alpha for r in state.norm_history])
    gw = gronwall_bound(estimate, t)
    estimate.gronwall_curve = gw
    out = {"times": t.tolist(), "x_norm": x.tolist(), "hdot_norm": h.tolist(), "gronwall": gw.tolist(),
           "gronwall_ok": bool(np.all(x[inside] <= gw[inside] * (1 + slack))),
           "five_quarters_ok": bool(np.all(x[inside] <= 1.25 * estimate.norm0 * (1 + slack))),
           "sup_ratio": float(x[inside].max() / estimate.norm0)}
    if C_R_b is not None and estimate.theta is not None:
        bc = bernoulli_bound(state.norm_history[0], C_R_b, estimate.theta, t)
        estimate.bernoulli_curve = bc
        out["bernoulli"] = bc.tolist()
        out["bernoulli_ok"] = bool(np.all(h[inside] <= bc[inside] * (1 + slack)))
    return out


def conservation_report(state: SolverState) -> dict:
    masses = np.array([f.mass() for f in state.fields])
    drift = np.abs(masses - state.mass0) / abs(state.mass0) if state.mass0 else np.abs(masses)
    return {"mass": masses.tolist(), "drift": drift.tolist(), "max_drift": float(drift.max()),
            "max_negative_mass": float(state.negmass_history.max()),
            "max_negative_mass_rel": float(state.negmass_history.max() / abs(state.mass0)) if state.mass0 else 0.0}


def lipschitz_report(state: SolverState, estimate: ExistenceEstimate) -> dict:
    """||Q(t) - Q(s)||_X / |t - s| on consecutive nodes against 16 K_b^2 ||f0||^3."""
    bound = 16 * estimate.K_b**2 * estimate.norm0**3
    qs = state.q_history
    rates = []
    for m in range(1, len(qs)):
        dt = state.times[m] - state.times[m - 1]
        rates.append(norms(qs[m] - qs[m - 1], state.alpha).x_alpha / dt)
    return {"bound": bound, "max_rate": float(max(rates, default=0.0)), "rates": rates}


def derivative_check(state: SolverState, kernel: SoftPotentialKernel, table: MultiplierTable,
                     t_interior: float, tau_list, M_local: int = 2, bound: float | None = None) -> dict:
    """e(tau) = ||(f(t + tau) - f(t))/tau - Q(f, f)(t)||_X with f(t + tau) from a
    local Picard solve started at the node nearest to t_interior. Returns the
    fitted slope of log e against log tau."""
    taus = np.sort(np.abs(np.asarray(tau_list, float)))
    if taus.size < 2 or taus.max() / taus.min() < 10**1.5 * (1 - 1e-9):
        raise ValueError("tau_list must span at least 1.5 decades")
    m = int(np.argmin(np.abs(state.times - t_interior)))
    if m == 0 or m == len(state.times) - 1:
        raise ValueError("t_interior must lie strictly inside the trajectory")
    t = float(state.times[m])
    if t + taus.max() > state.times[-1]:
        raise ValueError(f"tau {taus.max():g} exceeds the window end {state.times[-1]:g}")
    f = state.fields[m]
    flags: set = set()
    q = _q(kernel, table, f, flags)
    xf = norms(f, state.alpha).x_alpha
    errs = []
    for tau in taus:
        loc = picard_solve(kernel, table, f, float(tau), M_local, 1e-14 * xf, state.alpha, 40,
                           t0=t, omega_check=False)
        diff = DensityField(f.grid, (loc.fields[-1].values - f.values) / tau - q.values)
        errs.append(norms(diff, state.alpha).x_alpha)
    errs = np.array(errs)
    slope = float(np.polyfit(np.log(taus), np.log(errs), 1)[0])
    out = {"t": t, "tau": taus.tolist(), "e": errs.tolist(), "slope": slope,
           "e_over_tau_min": float(errs[0] / taus[0])}
    if bound is not None:
        out["bound"] = bound
        out["bound_ok"] = bool(errs[0] / taus[0] <= bound * 1.5)
    return out


# -- checkpoints --------------------------------------------------------------

def save_checkpoint(path, state: SolverState, estimate: ExistenceEstimate, kernel: SoftPotentialKernel) -> None:
    """Trajectory dump with a JSON header (kernel, alpha, K_b provenance, T, M, grid)."""
    head = {"kernel": kernel.identity(), "alpha": state.alpha, "estimate": estimate.as_dict(),
            "grid": state.grid.header(), "mass0": state.mass0, "windows": state.windows,
            "picard_residuals": list(state.picard_residuals), "fixed_point_residual": state.fixed_point_residual,
            "flags": sorted(state.flags)}
    arrays = {"times": state.times, "fields": np.stack([f.values for f in state.fields]),
              "q": np.stack([q.values for q in state.q_history]) if state.q_history else np.zeros((0,))}
    with open(path, "wb") as fh:
        np.savez_compressed(fh, header=np.array(json.dumps(head, sort_keys=True, default=_jsonable)), **arrays)


def _jsonable(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    raise TypeError(type(o))


def load_checkpoint(path):
    """Returns (state, estimate, header)."""
    with np.load(path, allow_pickle=False) as z:
        head = json.loads(str(z["header"]))
        times, vals, qv = z["times"], z["fields"], z["q"]
    gh = head["grid"]
    grid = make_grid(gh["d"], gh["n"], gh["R"])
    alpha = head["alpha"]
    fields = [DensityField(grid, v) for v in vals]
    state = SolverState(alpha=alpha, times=times, fields=fields, norm_history=[norms(f, alpha) for f in fields],
                        negmass_history=np.array([negative_mass(f) for f in fields]), mass0=head["mass0"],
                        picard_residuals=head["picard_residuals"],
                        fixed_point_residual=head["fixed_point_residual"],
                        q_history=[DensityField(grid, q) for q in qv], windows=head["windows"],
                        flags=set(head["flags"]))
    e = head["estimate"]
    est = ExistenceEstimate(K_b=e["K_b"], T=e["T"], norm0=e["norm0"], theta=e["theta"], T_ell=e["T_ell"],
                            provenance=e["provenance"], C_R=e["C_R"])
    return state, est, head
