"""Parameter ranges under which the existence theory applies.

Each check returns named conditions so callers can report exactly which side
condition failed instead of a bare boolean.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class Condition:
    name: str
    passed: bool
    reference: str
    detail: str = ""

    def as_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "reference": self.reference, "detail": self.detail}


class HypothesisError(ValueError):
    """Raised when a parameter set violates a required hypothesis."""

    def __init__(self, failed):
        self.failed = list(failed)
        msg = "; ".join(f"{c.name} ({c.reference}){': ' + c.detail if c.detail else ''}" for c in self.failed)
        super().__init__(f"hypothesis violated: {msg}")


def _fmt(x: float) -> str:
    return "inf" if math.isinf(x) else f"{x:g}"


def theorem1_conditions(d: int, lam: float, alpha: float, p: float) -> list:
    """Ranges of the local existence theorem: p in [2, inf], lambda in (1/2, d),
    alpha > d/4 for lambda < d/2 and alpha > d/2 for lambda >= d/2."""
    ref = "Theorem 1"
    conds = [
        Condition("p in [2, inf]", 2 <= p <= math.inf, ref, f"p={_fmt(p)}"),
        Condition("1/2 < lambda < d", 0.5 < lam < d, ref, f"lambda={lam:g}, d={d}"),
    ]
    if lam < d / 2:
        conds.append(Condition("alpha > d/4 for 1/2 < lambda < d/2", alpha > d / 4, ref,
                               f"alpha={alpha:g}, d/4={d / 4:g}"))
    else:
        conds.append(Condition("alpha > d/2 for d/2 <= lambda < d", alpha > d / 2, ref,
                               f"alpha={alpha:g}, d/2={d / 2:g}"))
    return conds


def corollary6_lower(d: int, p: float) -> float:
    """Lower end d/p - (d-1)(1-1/p) of the admissible lambda interval for 1 < p < 2."""
    return d / p - (d - 1) * (1 - 1 / p)


def corollary6_conditions(d: int, lam: float, alpha: float, p: float) -> list:
    """Range for angular parts in L^p with 1 < p < 2 (experimental regime)."""
    ref = "Corollary 6"
    lo = corollary6_lower(d, p)
    return [
        Condition("1 < p < 2", 1 < p < 2, ref, f"p={_fmt(p)}"),
        Condition("d/p - (d-1)(1-1/p) < lambda < d", lo < lam < d, ref,
                  f"lambda={lam:g}, lower end={lo:g}"),
        Condition("alpha > d/2", alpha > d / 2, ref, f"alpha={alpha:g}, d/2={d / 2:g}"),
    ]


def admissible(d: int, lam: float, alpha: float, p: float):
    """Return (regime, conditions). regime is 'theorem1', 'experimental' or None."""
    if 1 < p < 2:
        conds = corollary6_conditions(d, lam, alpha, p)
        return ("experimental" if all(c.passed for c in conds) else None), conds
    conds = theorem1_conditions(d, lam, alpha, p)
    return ("theorem1" if all(c.passed for c in conds) else None), conds


def require_admissible(d: int, lam: float, alpha: float, p: float) -> str:
    regime, conds = admissible(d, lam, alpha, p)
    if regime is None:
        raise HypothesisError([c for c in conds if not c.passed])
    return regime


def alpha_plus(lam: float, d: int) -> float:
    """Smoothness threshold for the gain-term regularity estimate (p >= 2)."""
    if not 0.5 < lam < d:
        raise ValueError("alpha_plus is defined for 1/2 < lambda < d")
    return d / 4 if lam <= (d + 1) / 2 else lam - d / 2


def gain_order(lam: float, d: int, p: float = 2.0):
    """Gain order delta = d/p - lambda of the p = 2 instantiation; None if not positive."""
    delta = d / p - lam
    return delta if delta > 0 else None
