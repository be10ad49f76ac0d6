"""Radial reference profile of the rescaled equation with constant potential.

Solves, for given p and coupling gamma >= 0,

    -dU + U + gamma Phi_U U = U^{p-1},     -dPhi_U = 4 pi U^2,

for the positive radial branch that starts at the ground state Q_p when
gamma = 0. With u = r U and s = r Phi the system is a pair of two-point
problems  u'' = u + gamma (s/r) u - |U|^{p-2} u,  s'' = -4 pi u^2 / r  with
u(0) = s(0) = 0, u(R) = 0 and s'(R) = 0 (Phi = M/r outside the support).
Both are discretised with the fourth-order Numerov scheme and solved by
sparse Newton, continuing in gamma from the ground state.

At desk-scale multipliers gamma * Phi(0) is of order one or larger, so this
profile differs strongly from Q_p. The 3D solver uses it as the base state
and only resolves the (small) anisotropic correction on the Cartesian grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.integrate import simpson
from scipy.interpolate import CubicSpline
from scipy.sparse.linalg import splu

from .groundstate import ground_state
from .hartree import radial_newton_potential
from .numerics_core import RadialField, RadialGrid

__all__ = ["RadialReference", "reference_profile"]

R_MAX = 25.0
N_NODES = 5000
MAX_REL_JUMP = 0.03


@dataclass(frozen=True)
class RadialReference:
    p: float
    gamma: float
    r: np.ndarray
    U: np.ndarray
    Phi: np.ndarray
    mass: float

    def _even_spline(self, vals):
        r = self.r
        return CubicSpline(np.concatenate([-r[:0:-1], r]), np.concatenate([vals[:0:-1], vals]))

    def splines(self):
        """Cubic splines (U, Phi) in r, evenly extended through the origin."""
        return self._even_spline(self.U), self._even_spline(self.Phi)

    def sample(self, radius: np.ndarray):
        """U and Phi at the given radii (U = 0 and Phi = M/r beyond r_max)."""
        su, sp_ = self.splines()
        rm = self.r[-1]
        inside = radius <= rm
        rc = np.minimum(radius, rm)
        U = np.where(inside, su(rc), 0.0)
        far = self.mass / np.where(radius > 0, radius, 1.0)
        Phi = np.where(inside, sp_(rc), far)
        return U, Phi


class _Numerov:
    def __init__(self, p, R=R_MAX, N=N_NODES):
        self.p = p
        self.N = N
        h = R / N
        self.h = h
        self.r = h * np.arange(1, N + 1)
        e = np.ones(N)
        D2 = sp.diags([e[:-1], -2 * e, e[:-1]], [-1, 0, 1], format="lil") / h ** 2
        B = sp.diags([e[:-1], 10 * e, e[:-1]], [-1, 0, 1], format="lil") / 12.0
        self.D2 = D2.tocsr()
        D2n = D2.copy()
        D2n[N - 1, N - 1] = -1.0 / h ** 2
        Bn = B.copy()
        Bn[N - 1, N - 1] = 11.0 / 12.0
        self.D2n = D2n.tocsr()
        self.B = B.tocsr()
        self.Bn = Bn.tocsr()

    def residual(self, u, s, g):
        r, p = self.r, self.p
        U = u / r
        f1 = u + g * s / r * u - np.abs(U) ** (p - 2) * u
        f2 = -4 * np.pi * u * u / r
        return np.concatenate([self.D2 @ u - self.B @ f1, self.D2n @ s - self.Bn @ f2])

    def jacobian(self, u, s, g):
        r, p = self.r, self.p
        U = u / r
        d11 = 1 + g * s / r - (p - 1) * np.abs(U) ** (p - 2)
        J11 = self.D2 - self.B @ sp.diags(d11)
        J12 = -self.B @ sp.diags(g * u / r)
        J21 = self.Bn @ sp.diags(8 * np.pi * u / r)
        return sp.bmat([[J11, J12], [J21, self.D2n]], format="csc")

    def newton(self, u, s, g, maxit=30):
        N = self.N
        x = np.concatenate([u, s])
        for _ in range(maxit):
            F = self.residual(x[:N], x[N:], g)
            dx = splu(self.jacobian(x[:N], x[N:], g)).solve(-F)
            x = x + dx
            if not np.all(np.isfinite(x)):
                return None
            if np.max(np.abs(dx)) < 1e-12 * max(1.0, np.max(np.abs(x))):
                return x[:N], x[N:]
        return None


_BRANCH: dict = {}
_STALLED: dict = {}  # last gamma reached on a branch that cannot be continued


def _ground_start(solver: _Numerov, p: float):
    gs = ground_state(p)
    u = solver.r * np.interp(solver.r, gs.r, gs.values)
    res = solver.newton(u, np.zeros_like(u), 0.0)
    if res is None:
        raise RuntimeError("reference profile failed at gamma = 0")
    return res


def _continue(p: float, gamma: float):
    key = round(p, 14)
    if key not in _BRANCH:
        solver = _Numerov(p)
        _BRANCH[key] = (solver, {0.0: _ground_start(solver, p)})
    solver, known = _BRANCH[key]
    if key in _STALLED and gamma > _STALLED[key]:
        raise RuntimeError(f"reference continuation stalled at gamma={_STALLED[key]:.6g}")
    if gamma in known:
        return solver, known[gamma]
    g0 = max(g for g in known if g <= gamma)
    u, s = known[g0]
    step = min(gamma - g0, 0.002 + 0.05 * g0)
    g = g0
    while g < gamma:
        gn = min(gamma, g + step)
        res = solver.newton(u, s, gn)
        ok = res is not None and np.min(res[0]) > -1e-10
        if ok:
            U0_old, U0_new = u[0], res[0][0]
            ok = abs(U0_new / U0_old - 1.0) <= MAX_REL_JUMP
        if ok:
            g = gn
            u, s = res
            step *= 1.5
        else:
            step *= 0.5
            if step < 1e-10 * max(gamma, 1e-3):
                # the branch turns back here; remember it so later calls fail fast
                known[g] = (u, s)
                _STALLED[key] = g
                raise RuntimeError(f"reference continuation stalled at gamma={g:.6g}")
    known[gamma] = (u, s)
    return solver, (u, s)


def reference_profile(p: float, gamma: float) -> RadialReference:
    """Reference profile for coupling ``gamma``; ``gamma = 0`` is exactly Q_p."""
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    if gamma == 0.0:
        gs = ground_state(p)
        rho = RadialField(gs.profile.grid, gs.values ** 2)
        phi = radial_newton_potential(rho).values
        return RadialReference(p, 0.0, gs.r, gs.values, phi, gs.mass)
    solver, (u, s) = _continue(float(p), float(gamma))
    r = solver.r
    U = u / r
    Phi = s / r
    # even extrapolation to the origin (exact for a + b r^2 + c r^4)
    U0 = (15 * U[0] - 6 * U[1] + U[2]) / 10.0
    P0 = (15 * Phi[0] - 6 * Phi[1] + Phi[2]) / 10.0
    rr = np.concatenate([[0.0], r])
    UU = np.concatenate([[U0], U])
    PP = np.concatenate([[P0], Phi])
    mass = float(4 * np.pi * simpson(rr * rr * UU * UU, x=rr))
    return RadialReference(float(p), float(gamma), rr, UU, PP, mass)
