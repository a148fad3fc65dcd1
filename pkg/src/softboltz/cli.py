"""Batch experiment runner.

    softboltz <scenario> [--config FILE] [--dry-run] [--<key> VALUE ...]

The config file is flat ``key = value`` text (``#`` starts a comment); every
key can also be given as a flag, and flags win. Unknown keys are rejected.
Parameter hypotheses are checked when the config is loaded; ``--dry-run``
stops after that check. A run writes ``summary.json`` (UTF-8, sorted keys),
CSV series with a header row and, for solver scenarios, a checkpoint into
``output_dir``. The exit status is 0 when every asserted invariant holds,
1 when one fails and 2 when the config or its hypotheses are rejected.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import dataclasses
import hashlib
import json
import math
import platform
import re
import sys
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numba
import numpy as np
import scipy

from . import __version__
from .collision import (AliasingWarning, estimate_constants, gate_conditions, q_minus, q_plus, q_plus_oracle,
                        q_total)
from .grid import (DensityField, VelocityGrid, dilate, gaussian_field, make_grid, norms, random_mixture)
from .hypotheses import Condition, HypothesisError, admissible
from .inequalities import (InequalityCheck, InequalityHypothesisError, check_derivative_moment,
                           check_embedding, check_hausdorff_young, check_monotone, check_sobolev,
                           dilation_spread, j_lambda, j_lambda_fourier_check, sweep)
from .kernels import AngularKernel, SoftPotentialKernel
from .multiplier import MultiplierTable, build_multiplier_table, cached_table
from .solver import (SolverError, WindowError, bounds_report, conservation_report, derivative_check,
                     existence_time, extend, lipschitz_report, load_checkpoint, picard_solve, save_checkpoint)

SCENARIOS = ("verify-inequalities", "collision-check", "estimate-constants", "simulate", "extend", "bench")
EXIT_OK, EXIT_FAILED, EXIT_REJECTED = 0, 1, 2


class ConfigError(ValueError):
    """The config violates the schema."""


def _float(text: str) -> float:
    return float(text.strip())


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_float(text: str):
    t = text.strip().lower()
    return None if t in ("", "none", "auto") else float(t)


@dataclass(frozen=True)
class ExperimentConfig:
    """Flat experiment description. ``lambda`` is spelled ``lam`` as an attribute."""

    scenario: str
    d: int = 3
    n: int = 16
    R: float = 3.0
    lam: float = 1.0
    b: str = "const"
    p: float = math.inf
    alpha: float = 1.0
    family_type: str = "mixture"
    family_count: int = 20
    family_seed: int = 0
    components: int = 3
    width_min: float = 0.8
    width_max: float = 1.2
    spread: float = 0.5
    datum: str = "mixture"
    datum_seed: int = 11
    M: int = 16
    tol: float = 1e-6
    max_iter: int = 30
    windows: int = 10
    K_b: float | None = None
    safety: float = 1.25
    equilibrium_tol: float = 5e-2
    oracle_points: int = 0
    derivative_check: bool = True
    output_dir: str = "softboltz-out"
    cache_dir: str = ""
    checkpoint: str = ""

    def as_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["lambda"] = out.pop("lam")
        return out

    def digest(self) -> str:
        return hashlib.sha256(_dumps(self.as_dict()).encode("utf-8")).hexdigest()


_PARSERS = {int: int, float: _float, str: str.strip, bool: _bool, "float | None": _opt_float}
_ALIASES = {"lambda": "lam"}


def _field_parsers() -> dict:
    out = {}
    for f in dataclasses.fields(ExperimentConfig):
        t = f.type if f.type in _PARSERS else {"int": int, "float": float, "str": str, "bool": bool}.get(f.type, f.type)
        out[f.name] = _PARSERS[t]
    return out


FIELDS = _field_parsers()


def parse_config_text(text: str) -> dict:
    """Flat ``key = value`` lines into a raw mapping (keys validated, values not yet typed)."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",), delimiters=("=",))
    cp.optionxform = str
    try:
        cp.read_string("[experiment]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    if len(cp.sections()) != 1:
        raise ConfigError("the config is flat; sections are not allowed")
    return dict(cp["experiment"])


def make_config(raw: dict) -> ExperimentConfig:
    """Typed, validated config from string values."""
    values = {}
    for key, text in raw.items():
        name = _ALIASES.get(key, key)
        if name not in FIELDS:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            values[name] = FIELDS[name](str(text))
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}") from exc
    if "scenario" not in values:
        raise ConfigError("missing required key 'scenario'")
    cfg = ExperimentConfig(**values)
    _validate(cfg)
    return cfg


def _validate(cfg: ExperimentConfig) -> None:
    if cfg.scenario not in SCENARIOS:
        raise ConfigError(f"scenario must be one of {', '.join(SCENARIOS)}")
    if cfg.scenario != "verify-inequalities" and cfg.d != 3:
        raise ConfigError("collision scenarios are implemented for d = 3")
    if cfg.d < 2:
        raise ConfigError("d must be at least 2")
    if cfg.n < 4 or cfg.n % 2:
        raise ConfigError("n must be an even integer >= 4")
    if not cfg.R > 0:
        raise ConfigError("R must be positive")
    if cfg.family_type not in ("mixture", "gaussian"):
        raise ConfigError("family_type must be 'mixture' or 'gaussian'")
    if cfg.datum not in ("mixture", "maxwellian"):
        raise ConfigError("datum must be 'mixture' or 'maxwellian'")
    for name in ("family_count", "components", "M", "max_iter", "windows"):
        if getattr(cfg, name) < 1:
            raise ConfigError(f"{name} must be at least 1")
    if not 0 < cfg.width_min <= cfg.width_max:
        raise ConfigError("need 0 < width_min <= width_max")
    if not cfg.tol > 0 or not cfg.safety > 0:
        raise ConfigError("tol and safety must be positive")
    if cfg.K_b is not None and not cfg.K_b > 0:
        raise ConfigError("K_b override must be positive")
    if cfg.oracle_points < 0:
        raise ConfigError("oracle_points must be nonnegative")
    angular(cfg)


_TRUNC = re.compile(r"^trunc_power\(\s*([0-9.eE+-]+)\s*,\s*([0-9.eE+-]+)\s*\)$")


def angular(cfg: ExperimentConfig) -> AngularKernel:
    """``const``, ``abs`` or ``trunc_power(nu, cutoff)``."""
    name = cfg.b.replace(" ", "")
    if name == "const":
        return AngularKernel.constant(cfg.p)
    if name == "abs":
        return AngularKernel.abs_cos(cfg.p)
    m = _TRUNC.match(name)
    if m:
        try:
            return AngularKernel.truncated_power(float(m.group(1)), float(m.group(2)), cfg.p)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    raise ConfigError(f"unknown angular kernel {cfg.b!r} (const, abs, trunc_power(nu, cutoff))")


def conditions(cfg: ExperimentConfig) -> tuple:
    """(regime, named conditions) evaluated at load time."""
    if cfg.scenario in ("estimate-constants", "simulate", "extend"):
        kernel = SoftPotentialKernel(cfg.lam, angular(cfg), cfg.d)
        conds = gate_conditions(kernel, cfg.alpha)
        regime = None
        if all(c.passed for c in conds):
            regime = "experimental" if 1 < cfg.p < 2 else "theorem1"
        return regime, conds
    return admissible(cfg.d, cfg.lam, cfg.alpha, cfg.p)


# -- output ------------------------------------------------------------------

def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(obj, Condition):
        return obj.as_dict()
    if isinstance(obj, InequalityCheck):
        return _clean(dataclasses.asdict(obj))
    return obj


def _dumps(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def write_json(path: Path, obj) -> None:
    path.write_text(_dumps(obj), encoding="utf-8")


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in r])


def check(name: str, value, limit, passed: bool, reference: str) -> dict:
    return {"name": name, "value": value, "limit": limit, "passed": bool(passed), "reference": reference}


# -- shared setup -------------------------------------------------------------

@dataclass
class Context:
    cfg: ExperimentConfig
    out: Path
    grid: VelocityGrid
    kernel: SoftPotentialKernel | None = None
    table: MultiplierTable | None = None
    files: list = field(default_factory=list)

    def write_csv(self, name: str, header, rows) -> None:
        write_csv(self.out / name, header, rows)
        self.files.append(name)

    def get_table(self) -> MultiplierTable:
        if self.table is None:
            if self.cfg.cache_dir:
                self.table = cached_table(self.kernel, self.grid, self.cfg.cache_dir, probes=20)
            else:
                self.table = build_multiplier_table(self.kernel, self.grid, probes=20)
        return self.table


def family(cfg: ExperimentConfig, grid: VelocityGrid) -> list:
    rng = np.random.default_rng(cfg.family_seed)
    if cfg.family_type == "gaussian":
        widths = rng.uniform(cfg.width_min, cfg.width_max, cfg.family_count)
        return [gaussian_field(grid, 1.0, float(w), tol=1e-4) for w in widths]
    return [random_mixture(grid, rng, cfg.components, (cfg.width_min, cfg.width_max), cfg.spread)
            for _ in range(cfg.family_count)]


def initial_datum(cfg: ExperimentConfig, grid: VelocityGrid) -> DensityField:
    if cfg.datum == "maxwellian":
        return gaussian_field(grid, 1.0, 1.0, tol=1e-4)
    return random_mixture(grid, np.random.default_rng(cfg.datum_seed), cfg.components,
                          (cfg.width_min, cfg.width_max), cfg.spread)


# -- scenarios ----------------------------------------------------------------

def _inequality_checks(f: DensityField, cfg: ExperimentConfig) -> tuple:
    a, lam = cfg.alpha, cfg.lam
    makers = [
        ("hausdorff_young_p1", lambda: check_hausdorff_young(f, a, 1.0)),
        ("hausdorff_young_p2", lambda: check_hausdorff_young(f, a, 2.0)),
        ("hausdorff_young_pinf", lambda: check_hausdorff_young(f, a, math.inf)),
        ("sobolev_p2", lambda: check_sobolev(f, a, 2.0)),
        ("sobolev_p4", lambda: check_sobolev(f, a, 4.0)),
        ("sobolev_pinf", lambda: check_sobolev(f, a, math.inf)),
        ("embedding", lambda: check_embedding(f, a, 0)),
        ("embedding_c1", lambda: check_embedding(f, a, 1)),
        ("derivative_moment", lambda: check_derivative_moment(f, a, 1)),
        ("monotone", lambda: check_monotone(f, a, a / 2)),
        ("j_lambda", lambda: j_lambda(f, lam, a)[1]),
        ("j_lambda_fourier", lambda: j_lambda_fourier_check(f, lam, a)),
    ]
    done, skipped = [], {}
    for label, make in makers:
        try:
            c = make()
        except InequalityHypothesisError as exc:
            skipped[label] = str(exc)
            continue
        c.params["label"] = label
        done.append(c)
    return done, skipped


_DILATION = (("theta", "Lemma 5", lambda f, cfg: j_lambda(f, cfg.lam, cfg.alpha)[1]),
             ("kappa", "Lemma 4", lambda f, cfg: check_monotone(f, cfg.alpha, cfg.alpha / 2)),
             ("mu", "Lemma 1", lambda f, cfg: check_hausdorff_young(f, cfg.alpha, 3.0)),
             ("nu", "Lemma 2", lambda f, cfg: check_sobolev(f, cfg.alpha, 4.0)))


def run_verify_inequalities(ctx: Context) -> tuple:
    cfg = ctx.cfg
    fields = family(cfg, ctx.grid)
    rows, skipped = [], {}
    for i, f in enumerate(fields):
        checks, skipped = _inequality_checks(f, cfg)
        for c in checks:
            c.params["field"] = i
            rows.append(c)
    labels = sorted({c.params["label"] for c in rows})
    summary = {lab: sweep([c for c in rows if c.params["label"] == lab]) for lab in labels}
    ctx.write_csv("inequality_checks.csv", ["field", "check", "lhs", "rhs_core", "ratio"],
                  [[c.params["field"], c.params["label"], c.lhs, c.rhs_core, c.ratio] for c in rows])
    asserts = [check(f"{lab} ratios finite", summary[lab]["max"], "finite", summary[lab]["finite"],
                     "interpolation inequalities") for lab in labels]
    base = gaussian_field(ctx.grid, 1.0, 1.0, tol=1e-4)
    dil = {}
    drows = []
    for name, ref, fn in _DILATION:
        try:
            ratios = [fn(dilate(base, s, 1e-4), cfg).ratio for s in (0.5, 1.0, 2.0)]
        except InequalityHypothesisError as exc:
            dil[name] = {"skipped": str(exc)}
            continue
        spread = dilation_spread(ratios)
        dil[name] = {"ratios": ratios, "spread": spread}
        drows += [[name, s, r] for s, r in zip((0.5, 1.0, 2.0), ratios)]
        asserts.append(check(f"dilation invariance of {name}", spread, 0.02, spread <= 0.02, ref))
    ctx.write_csv("dilation.csv", ["exponent", "s", "ratio"], drows)
    report = {"checks": summary, "skipped": skipped, "dilation": dil, "rows": len(rows)}
    return report, asserts


def _maxwellian(grid: VelocityGrid) -> DensityField:
    return DensityField(grid, np.exp(-np.pi * grid.speed_squared()))


def run_collision_check(ctx: Context) -> tuple:
    cfg, grid, kernel = ctx.cfg, ctx.grid, ctx.kernel
    table = ctx.get_table()
    asserts = []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", AliasingWarning)
        M = _maxwellian(grid)
        qp = q_plus(kernel, M, M, table)
        qm = q_minus(kernel, M, M)
        eq = float(np.abs(qp.values - qm.values).sum() / np.abs(qp.values).sum())
        asserts.append(check("equilibrium annihilation ||Q(M,M)||_1 / ||Q+(M,M)||_1", eq, cfg.equilibrium_tol,
                             eq <= cfg.equilibrium_tol, "collision invariance of the Maxwellian"))
        report = {"equilibrium_ratio": eq, "table": table.header()}
        if cfg.oracle_points:
            rng = np.random.default_rng(cfg.family_seed)
            # the origin, where Q+(M, M) peaks, followed by random interior nodes
            c = grid.n // 2
            idx = np.vstack([[c, c, c], rng.integers(1, grid.n, (cfg.oracle_points - 1, 3))])
            x = grid.axis()
            f = _maxwellian(grid)
            ref = q_plus_oracle(kernel, f, f, x[idx])
            got = qp.values[idx[:, 0], idx[:, 1], idx[:, 2]]
            err = float(np.abs(got - ref).max() / np.abs(ref).max())
            report["oracle"] = {"points": x[idx].tolist(), "q_plus": got.tolist(), "oracle": ref.tolist(),
                                "relative_linf": err}
            asserts.append(check("q_plus vs direct quadrature", err, 2e-2, err <= 2e-2, "gain term in Fourier form"))
        fields = family(cfg, grid)
        rows = []
        bl1 = kernel.norm_l1
        for i in range(0, len(fields) - 1, 2):
            f, g = fields[i], fields[i + 1]
            q = q_total(kernel, f, f, table)
            qpf = q_plus(kernel, f, f, table)
            sym = abs(q.mass()) / float(np.abs(qpf.values).sum() * grid.dv)
            qfg = q_total(kernel, f, g, table)
            jl, _ = j_lambda(f, kernel.lam)
            integ = float(np.abs(qfg.values).sum() * grid.dv) / (2 * bl1 * jl * float(np.abs(g.values).sum() * grid.dv))
            rows.append([i // 2, sym, integ])
        if len(fields) >= 3:
            f, g, h = fields[0], fields[1], fields[2]
            lhs = q_total(kernel, f, DensityField(grid, g.values + h.values), table).values
            rhs = q_total(kernel, f, g, table).values + q_total(kernel, f, h, table).values
            bil = float(np.abs(lhs - rhs).max() / np.abs(rhs).max())
            report["bilinearity_error"] = bil
            asserts.append(check("bilinearity Q(f, g + h) = Q(f, g) + Q(f, h)", bil, 1e-10, bil <= 1e-10,
                                 "bilinear collision operator"))
    report["aliasing_warnings"] = len(caught)
    ctx.write_csv("collision_family.csv", ["pair", "mass_symmetry", "integrability_ratio"], rows)
    if rows:
        sym_max = max(r[1] for r in rows)
        int_max = max(r[2] for r in rows)
        report.update({"mass_symmetry_max": sym_max, "integrability_ratio_max": int_max})
        asserts.append(check("mass symmetry |int Q(f,f)| / ||Q+(f,f)||_1", sym_max, 1e-3, sym_max <= 1e-3,
                             "int Q+(f,f) dv = int Q-(f,f) dv"))
        asserts.append(check("||Q(f,g)||_1 / (2 ||b||_1 J_lambda(f) ||g||_1)", int_max, 1.05, int_max <= 1.05,
                             "Theorem 2"))
    return report, asserts


def _constants(ctx: Context) -> dict:
    cfg = ctx.cfg
    fields = family(cfg, ctx.grid)
    if len(fields) < 2:
        raise ConfigError("estimating constants needs family_count >= 2")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AliasingWarning)
        return estimate_constants(ctx.kernel, cfg.alpha, ctx.grid, table=ctx.get_table(), safety=cfg.safety,
                                  fields=fields)


def _stability_checks(est: dict) -> list:
    out = []
    for key in ("C_I", "C_R"):
        first = est["stability"][f"{key}_first_half"]
        rel = (est[key] - first) / est[key] if est[key] else 0.0
        out.append(check(f"{key} first-half maximum within 30% of the full maximum", rel, 0.3, rel <= 0.3,
                         "empirical constants"))
    return out


def run_estimate_constants(ctx: Context) -> tuple:
    est = _constants(ctx)
    r = est["ratios"]
    ctx.write_csv("constants_family.csv", ["pair", "C_I_ratio", "C_R_ratio", "qr2_ratio"],
                  [[i, a, b, c] for i, (a, b, c) in enumerate(zip(r["C_I"], r["C_R"], r["qr2"]))])
    return {"constants": est}, _stability_checks(est)


def _estimate(ctx: Context, f0: DensityField):
    cfg = ctx.cfg
    n0 = norms(f0, cfg.alpha)
    theta = 2 * cfg.lam / (cfg.d + 2 * cfg.alpha)
    if cfg.K_b is not None:
        est = existence_time(cfg.K_b, n0, theta, {"source": "config override"})
        return est, None
    consts = _constants(ctx)
    prov = {"source": "empirical", "safety": cfg.safety, "family_seed": cfg.family_seed,
            "family_count": cfg.family_count, "C_I": consts["C_I"], "C_R": consts["C_R"]}
    return existence_time(consts["K_b"], n0, consts["theta"], prov, consts["C_R"]), consts


def _trajectory_rows(state, estimate, bounds) -> list:
    cons = conservation_report(state)
    bern = bounds.get("bernoulli", [float("nan")] * len(state.times))
    gw = bounds["gronwall"]
    return [[float(t), r.l1, r.hdot_alpha, r.x_alpha, g, b, m, dr, nm]
            for t, r, g, b, m, dr, nm in zip(state.times, state.norm_history, gw, bern, cons["mass"],
                                              cons["drift"], state.negmass_history)]


TRAJ_HEADER = ["t", "l1", "hdot_alpha", "x_alpha", "gronwall", "bernoulli", "mass", "mass_drift", "negative_mass"]


def _solver_checks(state, estimate, bounds, cons, tol_abs) -> list:
    ratios = state.residual_ratios()
    tail = ratios[1:] if ratios.size > 1 else ratios
    worst = float(tail.max()) if tail.size else 0.0
    out = [
        check("Picard residual ratio", worst, 0.85, worst <= 0.85, "contraction of the trajectory map"),
        check("fixed-point residual", state.fixed_point_residual, tol_abs, state.fixed_point_residual <= tol_abs,
              "integral equation f = f0 + int Q(f,f)"),
        check("sup ||f||_X / ||f0||_X on [0, T]", bounds["sup_ratio"], 1.25 * 1.05, bounds["five_quarters_ok"],
              "Corollary 2"),
        check("Gronwall bound", bounds["gronwall_ok"], True, bounds["gronwall_ok"], "Gronwall estimate"),
        check("max relative mass drift", cons["max_drift"], 1e-4, cons["max_drift"] <= 1e-4, "mass conservation"),
        check("max N_f / mass", cons["max_negative_mass_rel"], 1e-8, cons["max_negative_mass_rel"] <= 1e-8,
              "nonnegativity of solutions"),
    ]
    if "bernoulli_ok" in bounds:
        out.append(check("Bernoulli bound", bounds["bernoulli_ok"], True, bounds["bernoulli_ok"],
                         "quadratic H^alpha estimate"))
    return out


def _simulate(ctx: Context) -> tuple:
    cfg = ctx.cfg
    f0 = initial_datum(cfg, ctx.grid)
    estimate, consts = _estimate(ctx, f0)
    table = ctx.get_table()
    x0 = estimate.norm0
    state = picard_solve(ctx.kernel, table, f0, estimate.T, cfg.M, cfg.tol * x0, cfg.alpha, cfg.max_iter)
    C_R_b = max(consts["C_R"], consts["qr2_max"]) * ctx.kernel.norm_lp if consts else None
    return state, estimate, consts, C_R_b


def run_simulate(ctx: Context) -> tuple:
    cfg = ctx.cfg
    try:
        state, estimate, consts, C_R_b = _simulate(ctx)
    except SolverError as exc:
        return {"error": str(exc), "diagnostics": exc.diagnostics}, [
            check("Picard iteration converged", False, True, False, "local existence")]
    bounds = bounds_report(state, estimate, C_R_b)
    cons = conservation_report(state)
    lip = lipschitz_report(state, estimate)
    asserts = _solver_checks(state, estimate, bounds, cons, cfg.tol * estimate.norm0)
    asserts.append(check("time-Lipschitz rate of Q", lip["max_rate"], lip["bound"] * 1.5,
                         lip["max_rate"] <= lip["bound"] * 1.5, "Lipschitz continuity of Q(f,f) in time"))
    report = {"estimate": estimate.as_dict(), "constants": consts, "picard_residuals": state.picard_residuals,
              "residual_ratios": state.residual_ratios(), "fixed_point_residual": state.fixed_point_residual,
              "max_drift": cons["max_drift"], "max_negative_mass_rel": cons["max_negative_mass_rel"],
              "sup_ratio": bounds["sup_ratio"], "lipschitz": {k: lip[k] for k in ("bound", "max_rate")},
              "flags": sorted(state.flags)}
    if cfg.derivative_check and cfg.M >= 2:
        taus = estimate.T * np.logspace(-4, -2.5, 4)
        dc = derivative_check(state, ctx.kernel, ctx.get_table(), estimate.T / 2, taus,
                              bound=16 * estimate.K_b**2 * estimate.norm0**3)
        report["derivative_check"] = dc
        asserts.append(check("slope of log e(tau) against log tau", dc["slope"], [0.85, 1.15],
                             0.85 <= dc["slope"] <= 1.15, "strong differentiability in time"))
        asserts.append(check("e(tau) / tau at the smallest tau", dc["e_over_tau_min"], dc["bound"] * 1.5,
                             dc["bound_ok"], "strong differentiability in time"))
    ctx.write_csv("trajectory.csv", TRAJ_HEADER, _trajectory_rows(state, estimate, bounds))
    ckpt = ctx.out / "checkpoint.npz"
    save_checkpoint(ckpt, state, estimate, ctx.kernel)
    ctx.files.append(ckpt.name)
    return report, asserts


def run_extend(ctx: Context) -> tuple:
    cfg = ctx.cfg
    path = Path(cfg.checkpoint) if cfg.checkpoint else ctx.out / "checkpoint.npz"
    if path.exists():
        state, estimate, head = load_checkpoint(path)
        if head["kernel"] != ctx.kernel.identity():
            raise ConfigError(f"checkpoint {path} was written for kernel {head['kernel']}")
        if head["grid"] != ctx.grid.header() or head["alpha"] != cfg.alpha:
            raise ConfigError(f"checkpoint {path} does not match the configured grid or alpha")
        source = str(path)
    else:
        try:
            state, estimate, _, _ = _simulate(ctx)
        except SolverError as exc:
            return {"error": str(exc), "diagnostics": exc.diagnostics}, [
                check("Picard iteration converged", False, True, False, "local existence")]
        source = "fresh"
    start = len(estimate.T_ell)
    asserts = []
    report = {"source": source}
    try:
        extend(state, estimate, ctx.kernel, ctx.get_table(), cfg.windows, cfg.M, cfg.tol, cfg.max_iter)
    except WindowError as exc:
        report.update({"error": str(exc), "window": exc.window, "hdot_trend": exc.diagnostics.get("hdot_trend")})
        asserts.append(check(f"window {exc.window} converged", False, True, False, "extension scheme"))
    inc = estimate.increments()
    ratios = estimate.increment_ratios()
    cover = estimate.coverage()
    worst = float(ratios.min()) if ratios.size else 1.0
    asserts.append(check("minimum increment ratio", worst, 0.75, worst >= 0.75, "extension scheme"))
    asserts.append(check("coverage / (5 T)", cover / estimate.five_T, 0.95, cover >= 0.95 * estimate.five_T,
                         "extension scheme"))
    growth = [w.get("growth") for w in state.windows[1:]]
    ok = all(w.get("cr5_ok", True) for w in state.windows[1:])
    asserts.append(check("window growth <= 5/4 (1 + 5%)", max(growth, default=1.0), 1.25 * 1.05, ok,
                         "Corollary 2"))
    cons = conservation_report(state)
    report.update({"estimate": estimate.as_dict(), "increments": inc, "increment_ratios": ratios,
                   "coverage": cover, "new_windows": len(estimate.T_ell) - start, "growth": growth,
                   "max_drift": cons["max_drift"], "max_negative_mass_rel": cons["max_negative_mass_rel"]})
    ctx.write_csv("windows.csv", ["window", "t0", "t1", "increment", "iterations", "growth"],
                  [[i, w["t0"], w["t1"], w["t1"] - w["t0"], w["iterations"], w.get("growth", float("nan"))]
                   for i, w in enumerate(state.windows)])
    bounds = bounds_report(state, estimate)
    ctx.write_csv("trajectory.csv", TRAJ_HEADER, _trajectory_rows(state, estimate, bounds))
    ckpt = ctx.out / "checkpoint.npz"
    save_checkpoint(ckpt, state, estimate, ctx.kernel)
    ctx.files.append(ckpt.name)
    return report, asserts


def run_bench(ctx: Context) -> tuple:
    timings = {}
    t = time.perf_counter()
    table = ctx.get_table()
    timings["table_s"] = time.perf_counter() - t
    f = _maxwellian(ctx.grid)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AliasingWarning)
        t = time.perf_counter()
        q_plus(ctx.kernel, f, f, table)
        timings["q_plus_s"] = time.perf_counter() - t
        t = time.perf_counter()
        q_minus(ctx.kernel, f, f)
        timings["q_minus_s"] = time.perf_counter() - t
        if ctx.cfg.oracle_points:
            x = ctx.grid.axis()
            idx = np.random.default_rng(ctx.cfg.family_seed).integers(1, ctx.grid.n, (ctx.cfg.oracle_points, 3))
            t = time.perf_counter()
            q_plus_oracle(ctx.kernel, f, f, x[idx])
            timings["oracle_s"] = time.perf_counter() - t
    return {"timings": timings, "table": table.header()}, []


RUNNERS = {"verify-inequalities": run_verify_inequalities, "collision-check": run_collision_check,
           "estimate-constants": run_estimate_constants, "simulate": run_simulate, "extend": run_extend,
           "bench": run_bench}


def provenance(cfg: ExperimentConfig, table: MultiplierTable | None) -> dict:
    return {"config_sha256": cfg.digest(), "table_hash": table.build_hash if table is not None else None,
            "seeds": {"family_seed": cfg.family_seed, "datum_seed": cfg.datum_seed},
            "versions": {"softboltz": __version__, "python": platform.python_version(), "numpy": np.__version__,
                         "scipy": scipy.__version__, "numba": numba.__version__}}


def run_experiment(cfg: ExperimentConfig) -> tuple:
    """Execute ``cfg`` and write its reports. Returns (exit status, summary)."""
    regime, conds = conditions(cfg)
    if regime is None:
        raise HypothesisError([c for c in conds if not c.passed])
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    grid = make_grid(cfg.d, cfg.n, cfg.R)
    kernel = SoftPotentialKernel(cfg.lam, angular(cfg), cfg.d) if cfg.scenario != "verify-inequalities" else None
    ctx = Context(cfg, out, grid, kernel)
    report, asserts = RUNNERS[cfg.scenario](ctx)
    failed = [a for a in asserts if not a["passed"]]
    summary = {"scenario": cfg.scenario, "config": cfg.as_dict(), "regime": regime, "conditions": conds,
               "grid": grid.header(), "kernel": kernel.identity() if kernel else None, "report": report,
               "assertions": asserts, "failed": [f"{a['name']} ({a['reference']})" for a in failed],
               "passed": not failed, "files": sorted(ctx.files + ["summary.json"]),
               "provenance": provenance(cfg, ctx.table)}
    write_json(out / "summary.json", summary)
    return (EXIT_FAILED if failed else EXIT_OK), summary


# -- command line -------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="softboltz", description="Spectral Boltzmann experiments for soft potentials.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SCENARIOS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="flat key = value config file")
        sp.add_argument("--dry-run", action="store_true", help="validate the config and hypotheses only")
        for f in dataclasses.fields(ExperimentConfig):
            if f.name == "scenario":
                continue
            key = "lambda" if f.name == "lam" else f.name
            sp.add_argument(f"--{key}", dest=f"opt_{f.name}", metavar="VALUE", default=None)
    return parser


def load(argv) -> tuple:
    args = build_parser().parse_args(argv)
    raw = {}
    if args.config:
        raw = parse_config_text(Path(args.config).read_text(encoding="utf-8"))
    file_scenario = raw.get("scenario")
    if file_scenario is not None and file_scenario.strip() != args.command:
        raise ConfigError(f"config scenario {file_scenario!r} does not match the subcommand {args.command!r}")
    raw["scenario"] = args.command
    for f in dataclasses.fields(ExperimentConfig):
        value = getattr(args, f"opt_{f.name}", None)
        if value is not None:
            raw.pop("lambda" if f.name == "lam" else f.name, None)
            raw[f.name] = value
    return make_config(raw), args.dry_run


def main(argv=None) -> int:
    try:
        cfg, dry = load(argv)
        regime, conds = conditions(cfg)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_REJECTED
    if dry or regime is None:
        sys.stdout.write(_dumps({"scenario": cfg.scenario, "regime": regime, "conditions": conds,
                                 "config": cfg.as_dict()}))
        if regime is None:
            msg = "; ".join(f"{c.name} ({c.reference}): {c.detail}" for c in conds if not c.passed)
            print(f"config rejected: {msg}", file=sys.stderr)
            return EXIT_REJECTED
        return EXIT_OK
    try:
        status, summary = run_experiment(cfg)
    except (HypothesisError, ConfigError) as exc:
        print(f"config rejected: {exc}", file=sys.stderr)
        return EXIT_REJECTED
    for a in summary["assertions"]:
        print(f"{'PASS' if a['passed'] else 'FAIL'} {a['name']}: {_clean(a['value'])} (limit {_clean(a['limit'])})")
    print(f"summary written to {Path(cfg.output_dir) / 'summary.json'}")
    return status


if __name__ == "__main__":
    sys.exit(main())
