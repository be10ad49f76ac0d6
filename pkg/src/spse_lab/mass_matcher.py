"""Mass map f(lam) = int u_lam^2 / a and the root f(lam_eps) = 1.

Each f evaluation is a fixed-multiplier solve. The root is located by
bisection in log(lam), which only needs a sign change and tolerates a
non-monotone f. Without an explicit bracket, the existence window is tried
first and then powers of two around Lambda_eps.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .asymptotics import Lambda_eps, a_star_of, case_tag, p_of, theorem_bracket
from .numerics_core import Grid3D
from .potentials import Potential
from .spse_solver import NewtonError, build_rescaled, newton_solve

__all__ = [
    "MassCurvePoint",
    "MatchResult",
    "BracketError",
    "mass_curve",
    "match_mass",
    "solver_mass_map",
    "scaling_mass_map",
    "JUMP_LIMIT",
]

JUMP_LIMIT = 0.25
BRACKET_MESSAGE = "bracket invalid — adjust per Theorem 1.1 case"


class BracketError(ValueError):
    """No sign change of f - 1 on the candidate brackets."""

    def __init__(self, samples, failures=()):
        super().__init__(BRACKET_MESSAGE)
        self.samples = samples
        self.failures = list(failures)  # (lam, message) of solves that did not converge


@dataclass(frozen=True)
class MassCurvePoint:
    lam: float
    f_value: float
    summary: dict = field(default_factory=dict)
    ok: bool = True
    error: str = ""
    jump: bool = False  # f changed by more than JUMP_LIMIT from the previous point


@dataclass(frozen=True)
class MatchResult:
    lambda_eps: float
    f_at_root: float
    bracket: tuple
    iterations: int
    case_tag: str
    history: tuple = ()


def solver_mass_map(eps: float, sign, a: float, V: Potential, box: Grid3D | None = None,
                    poisson_on: bool = True, tol: float = 1e-9,
                    summaries: dict | None = None) -> Callable[[float], float]:
    """f(lam) from full solves; solve summaries are stored in ``summaries``."""
    p = p_of(eps, sign)

    def f(lam: float) -> float:
        rec = newton_solve(build_rescaled(lam, p, V, box=box, poisson_on=poisson_on), tol=tol)
        if summaries is not None:
            summaries[lam] = rec.summary()
        return rec.u_mass / a

    return f


def scaling_mass_map(eps: float, sign, a: float, V0: float = 1.0,
                     a_star_eps: float | None = None) -> Callable[[float], float]:
    """Closed-form f for the pure scaling problem (no Coulomb term, V = V0)."""
    p = p_of(eps, sign)
    ast = a_star_of(p) if a_star_eps is None else a_star_eps
    return lambda lam: ast / (V0 ** (2.0 / (p - 2.0)) * a) * lam ** (2.0 / (p - 2.0) - 1.5)


def mass_curve(eps: float, sign, a: float, V: Potential, lambdas, box: Grid3D | None = None,
               poisson_on: bool = True, tol: float = 1e-9,
               mass_map: Callable[[float], float] | None = None) -> list[MassCurvePoint]:
    """f at each lam (sorted); failed solves are kept as flagged points."""
    summaries: dict = {}
    f = mass_map or solver_mass_map(eps, sign, a, V, box, poisson_on, tol, summaries)
    out: list[MassCurvePoint] = []
    prev = None
    for lam in sorted(float(x) for x in lambdas):
        try:
            val = float(f(lam))
        except (NewtonError, RuntimeError) as exc:
            out.append(MassCurvePoint(lam, np.nan, {}, False, str(exc)))
            continue
        jump = prev is not None and abs(val / prev - 1.0) > JUMP_LIMIT
        out.append(MassCurvePoint(lam, val, summaries.get(lam, {}), True, "", jump))
        prev = val
    return out


def _candidate_brackets(eps, sign, a, V0, a_star, scan: int):
    lam0 = Lambda_eps(eps, sign, a, V0, a_star)
    cands = []
    try:
        lo, hi = theorem_bracket(eps, a, V0, a_star, case_tag(a, V0, a_star))
        if np.isfinite(hi) and hi < 1e8:
            cands.append([lo, hi])
    except ValueError:
        pass
    # powers of two around Lambda, nearest first
    ks = [0]
    for k in range(1, scan + 1):
        ks += [k, -k]
    cands.append([lam0 * 2.0 ** k for k in ks])
    return cands


def match_mass(eps: float, sign, a: float, V: Potential, bracket=None, tol: float = 1e-6,
               x_rtol: float = 1e-10, max_iter: int = 200, box: Grid3D | None = None,
               poisson_on: bool = True, mass_map: Callable[[float], float] | None = None,
               scan: int = 4, solver_tol: float = 1e-9) -> MatchResult:
    """Bisection for f(lam) = 1 in log(lam).

    Stops once |f - 1| < tol and the bracket is narrower than ``x_rtol``
    (relative). Raises :class:`BracketError` if no sign change is found.
    """
    if not (tol > 0 and x_rtol > 0):
        raise ValueError("tolerances must be positive")
    p = p_of(eps, sign)
    a_star = a_star_of(p)
    try:
        tag = case_tag(a, V.V0, a_star)
    except ValueError:
        tag = ""
    f = mass_map or solver_mass_map(eps, sign, a, V, box, poisson_on, solver_tol)
    cache: dict = {}
    failed: dict = {}

    def g(lam):
        if lam not in cache:
            cache[lam] = float(f(lam)) - 1.0
        return cache[lam]

    def safe_g(lam):
        try:
            return g(lam)
        except (NewtonError, RuntimeError) as exc:
            failed[lam] = str(exc)
            return np.nan

    lo = hi = None
    if bracket is not None:
        lo, hi = sorted(float(b) for b in bracket)
        if not (lo > 0 and np.sign(g(lo)) * np.sign(g(hi)) < 0):
            raise BracketError([(lo, cache.get(lo)), (hi, cache.get(hi))])
    else:
        for cand in _candidate_brackets(eps, sign, a, V.V0, a_star, scan):
            found = None
            if len(cand) == 2:
                glo, ghi = safe_g(cand[0]), safe_g(cand[1])
                if np.sign(glo) * np.sign(ghi) < 0:
                    found = tuple(cand)
            else:
                # scan outward from Lambda until f - 1 changes sign
                g0 = safe_g(cand[0])
                for lam in cand[1:]:
                    gv = safe_g(lam)
                    if np.isfinite(g0) and np.sign(gv) * np.sign(g0) < 0:
                        found = tuple(sorted((cand[0], lam)))
                        break
            if found:
                lo, hi = found
                break
        if lo is None:
            raise BracketError(sorted((k, v + 1.0) for k, v in cache.items()),
                               sorted(failed.items()))
    br = (lo, hi)
    glo = g(lo)
    it = 0
    while True:
        mid = float(np.sqrt(lo * hi))
        gm = g(mid)
        it += 1
        if abs(gm) < tol and hi / lo - 1.0 < x_rtol:
            break
        if gm == 0.0:
            break
        if np.sign(gm) == np.sign(glo):
            lo, glo = mid, gm
        else:
            hi = mid
        if it >= max_iter or hi / lo - 1.0 < 1e-15:
            if abs(gm) < tol:
                break
            raise RuntimeError(f"bisection did not reach |f-1| < {tol:g}; f may be discontinuous")
    hist = tuple(sorted((k, v + 1.0) for k, v in cache.items()))
    return MatchResult(mid, gm + 1.0, br, it, tag, hist)
