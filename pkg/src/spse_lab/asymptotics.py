"""Closed-form multiplier asymptotics and log-log rate fitting.

For p = 10/3 + s eps (s = +1 or -1) and target mass a, the leading-order
multiplier is

    Lambda = (V0^{2/(p-2)} a / a_star)^{2(p-2)/(10-3p)},

which is exactly the root of the pure scaling mass map (no Coulomb term,
constant potential). The existence window for the multiplier is
(exp(4 l/(9 eps)), exp(16 l/(9 eps))) with l = ln(V0^{-3/2} a_star / a) in
case i and l = ln(V0^{3/2} a / a_star) in case ii.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .groundstate import ground_state

__all__ = [
    "P_CRIT",
    "AsymptoticsReport",
    "p_of",
    "case_tag",
    "a_star_of",
    "Lambda_eps",
    "theorem_bracket",
    "fit_rate",
    "asymptotics_report",
]

P_CRIT = 10.0 / 3.0


def _sign(sign) -> int:
    if sign in ("+", 1, "+1"):
        return 1
    if sign in ("-", -1, "-1"):
        return -1
    raise ValueError(f"sign must be '+' or '-', got {sign!r}")


def p_of(eps: float, sign="+") -> float:
    """p_eps = 10/3 + sign * eps."""
    return P_CRIT + _sign(sign) * float(eps)


def a_star_of(p: float) -> float:
    """Mass of the ground state Q_p."""
    return ground_state(p).mass


def case_tag(a: float, V0: float, a_star: float) -> str:
    """'i' when a < V0^{-3/2} a_star, 'ii' when a > V0^{-3/2} a_star."""
    thr = V0 ** -1.5 * a_star
    if a < thr:
        return "i"
    if a > thr:
        return "ii"
    raise ValueError("a equals V0^{-3/2} a_star: neither case applies")


def Lambda_eps(eps: float, sign, a: float, V0: float, a_star_eps: float) -> float:
    """Leading-order multiplier for p = 10/3 + sign * eps."""
    p = p_of(eps, sign)
    den = 10.0 - 3.0 * p
    if abs(den) < 1e-12:
        raise ValueError("mass-critical: Λ undefined")
    if not (a > 0 and V0 > 0 and a_star_eps > 0):
        raise ValueError("a, V0 and a_star must be positive")
    base = V0 ** (2.0 / (p - 2.0)) * a / a_star_eps
    return float(base ** (2.0 * (p - 2.0) / den))


def theorem_bracket(eps: float, a: float, V0: float, a_star: float, case: str) -> tuple[float, float]:
    """Endpoints of the multiplier window for case 'i' or 'ii'."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    if case == "i":
        ell = np.log(V0 ** -1.5 * a_star / a)
    elif case == "ii":
        ell = np.log(V0 ** 1.5 * a / a_star)
    else:
        raise ValueError(f"case must be 'i' or 'ii', got {case!r}")
    if ell == 0.0:
        raise ValueError("degenerate bracket: log term vanishes")
    if ell < 0.0:
        raise ValueError(f"inputs are not consistent with case {case}")
    return float(np.exp(4.0 * ell / (9.0 * eps))), float(np.exp(16.0 * ell / (9.0 * eps)))


def fit_rate(samples) -> float:
    """Least-squares slope of log(value) against log(scale)."""
    s = np.asarray(list(samples), dtype=float)
    if s.ndim != 2 or s.shape[1] != 2 or s.shape[0] < 3:
        raise ValueError("need at least three (scale, value) samples")
    if np.any(s <= 0):
        raise ValueError("nonpositive values cannot be fitted in log-log")
    x, y = np.log(s[:, 0]), np.log(s[:, 1])
    return float(np.polyfit(x, y, 1)[0])


@dataclass(frozen=True)
class AsymptoticsReport:
    eps: float
    p_eps: float
    Lambda_eps: float
    bracket: tuple
    lambda_measured: float
    ratio: float
    rate_fits: dict = field(default_factory=dict)


def asymptotics_report(eps: float, sign, a: float, V0: float = 1.0, a_star_eps: float | None = None,
                       lambda_measured: float | None = None, rate_fits: dict | None = None
                       ) -> AsymptoticsReport:
    """Collect Lambda, the window and (optionally) a measured multiplier."""
    p = p_of(eps, sign)
    a_star_eps = a_star_of(p) if a_star_eps is None else a_star_eps
    lam0 = Lambda_eps(eps, sign, a, V0, a_star_eps)
    try:
        br = theorem_bracket(eps, a, V0, a_star_eps, case_tag(a, V0, a_star_eps))
    except ValueError:
        br = (np.nan, np.nan)
    lm = np.nan if lambda_measured is None else float(lambda_measured)
    return AsymptoticsReport(float(eps), p, lam0, br, lm, lm / lam0, dict(rate_fits or {}))
