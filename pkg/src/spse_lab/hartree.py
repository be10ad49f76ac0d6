"""Newton (Hartree) potential  Phi = |x|^{-1} * rho,  i.e.  -dPhi = 4 pi rho.

Two paths are provided. The radial path integrates the closed form

    Phi(r) = 4 pi [ (1/r) int_0^r s^2 rho ds + int_r^inf s rho ds ]

exactly for the piecewise-linear interpolant of rho. The 3D path solves the
Poisson problem on the box with Dirichlet data M/|x| (monopole far field),
discretised with the fourth-order compact 19-point ("Mehrstellen") stencil.
The linear system is solved either directly in the sine basis (``"dst"``,
used inside the nonlinear solver) or by Jacobi-preconditioned conjugate
gradients (``"cg"``).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Union

import numpy as np
from scipy import fft
from scipy.interpolate import CubicSpline
from scipy.sparse.linalg import LinearOperator, cg

from .numerics_core import (
    Grid3D,
    RadialField,
    RadialGrid,
    ScalarField3D,
    integrate_3d,
    integrate_radial,
    lap7,
    trapezoid_weights,
)

__all__ = [
    "HartreePotential",
    "radial_newton_potential",
    "poisson_solve_3d",
    "PoissonSolver",
    "coulomb_symmetry_integral",
    "coulomb_energy",
]


@dataclass(frozen=True)
class HartreePotential:
    representation: Union[RadialField, ScalarField3D]
    total_charge: float
    far_field_coeff: float

    @property
    def values(self) -> np.ndarray:
        return self.representation.values


def _cell_moments(r: np.ndarray):
    """Exact integrals of s^m times the two linear hat pieces on every cell."""
    a = r[:-1]
    h = np.diff(r)
    # int_0^1 (a + h t)^m (1 - t) h dt  and  int_0^1 (a + h t)^m t h dt
    m1_left = h * (a / 2 + h / 6)
    m1_right = h * (a / 2 + h / 3)
    m2_left = h * (a * a / 2 + a * h / 3 + h * h / 12)
    m2_right = h * (a * a / 2 + 2 * a * h / 3 + h * h / 4)
    return m1_left, m1_right, m2_left, m2_right


def radial_newton_potential(u2: RadialField) -> HartreePotential:
    """Exact-quadrature Newton potential of a radial charge density."""
    rho = u2.values
    if not np.all(np.isfinite(rho)):
        raise ValueError("invalid field")
    if np.any(rho < 0):
        raise ValueError("negative charge density")
    r = u2.r
    m1l, m1r, m2l, m2r = _cell_moments(r)
    inner_cells = rho[:-1] * m2l + rho[1:] * m2r
    outer_cells = rho[:-1] * m1l + rho[1:] * m1r
    inner = np.concatenate([[0.0], np.cumsum(inner_cells)])
    outer_tot = np.concatenate([[0.0], np.cumsum(outer_cells)])
    outer = outer_tot[-1] - outer_tot
    phi = np.empty_like(rho)
    phi[0] = 4 * np.pi * outer[0]
    phi[1:] = 4 * np.pi * (inner[1:] / r[1:] + outer[1:])
    charge = 4 * np.pi * inner[-1]
    return HartreePotential(RadialField(u2.grid, phi), float(charge), float(charge))


class PoissonSolver:
    """Mehrstellen Poisson solver on a fixed box; reusable across right-hand sides.

    ``solve_interior`` works on interior arrays and is the kernel used by the
    Newton solver; ``solve`` wraps it with boundary data and diagnostics.
    """

    def __init__(self, grid: Grid3D):
        if grid.n < 5:
            raise ValueError("grid too small for the Poisson stencil")
        self.grid = grid
        h = grid.h
        m = grid.n - 2
        c = np.cos(np.arange(1, m + 1) * np.pi / (m + 1))
        cx, cy, cz = c[:, None, None], c[None, :, None], c[None, None, :]
        s = cx + cy + cz
        q = cx * cy + cy * cz + cx * cz
        # eigenvalues of minus the 19-point operator in the sine basis
        self._eig = (24.0 - 4.0 * s - 4.0 * q) / (6.0 * h * h)
        # eigenvalues of minus the 7-point operator (used as a preconditioner elsewhere)
        self.eig7 = (6.0 - 2.0 * s) / (h * h)
        self._inv_r = 1.0 / np.where(grid.radius() > 0, grid.radius(), 1.0)
        self._w = trapezoid_weights(grid)

    # -- stencils on full arrays, returned on the interior ------------------
    def a19(self, u: np.ndarray) -> np.ndarray:
        """19-point Mehrstellen Laplacian (times 6h^2 normalisation removed)."""
        h = self.grid.h
        c = u[1:-1, 1:-1, 1:-1]
        faces = (u[2:, 1:-1, 1:-1] + u[:-2, 1:-1, 1:-1] + u[1:-1, 2:, 1:-1]
                 + u[1:-1, :-2, 1:-1] + u[1:-1, 1:-1, 2:] + u[1:-1, 1:-1, :-2])
        edges = (u[2:, 2:, 1:-1] + u[2:, :-2, 1:-1] + u[:-2, 2:, 1:-1] + u[:-2, :-2, 1:-1]
                 + u[2:, 1:-1, 2:] + u[2:, 1:-1, :-2] + u[:-2, 1:-1, 2:] + u[:-2, 1:-1, :-2]
                 + u[1:-1, 2:, 2:] + u[1:-1, 2:, :-2] + u[1:-1, :-2, 2:] + u[1:-1, :-2, :-2])
        return (-24.0 * c + 2.0 * faces + edges) / (6.0 * h * h)

    def charge(self, rho: np.ndarray) -> float:
        """Trapezoid total charge of a full (n,n,n) density."""
        w = self._w
        s = np.tensordot(rho, w, axes=([2], [0]))
        s = np.tensordot(s, w, axes=([1], [0]))
        return float(np.dot(s, w))

    def _rhs(self, rho_full: np.ndarray, total: float) -> np.ndarray:
        h = self.grid.h
        f = 4.0 * np.pi * rho_full
        g = total * self._inv_r
        g[1:-1, 1:-1, 1:-1] = 0.0
        return f[1:-1, 1:-1, 1:-1] + h * h / 12.0 * lap7(f, h) + self.a19(g)

    def solve_interior(self, rho_int: np.ndarray) -> np.ndarray:
        """Potential on interior nodes for a density given on interior nodes."""
        n = self.grid.n
        full = np.zeros((n, n, n))
        full[1:-1, 1:-1, 1:-1] = rho_int
        total = self.charge(full)
        b = self._rhs(full, total)
        return fft.idstn(fft.dstn(b, type=1) / self._eig, type=1)

    def _minus_a19_interior(self, x: np.ndarray) -> np.ndarray:
        n = self.grid.n
        full = np.zeros((n, n, n))
        full[1:-1, 1:-1, 1:-1] = x
        return -self.a19(full)

    def solve(self, rho_full: np.ndarray, method: str = "dst", tol: float = 1e-8,
              maxiter: int = 2000) -> tuple[np.ndarray, float, float]:
        """Full-box potential, total charge and final relative algebraic residual."""
        n = self.grid.n
        total = self.charge(rho_full)
        b = self._rhs(rho_full, total)
        if method == "dst":
            x = fft.idstn(fft.dstn(b, type=1) / self._eig, type=1)
        elif method == "cg":
            m = (n - 2) ** 3
            shape = (n - 2,) * 3
            op = LinearOperator((m, m), dtype=float,
                                matvec=lambda v: self._minus_a19_interior(v.reshape(shape)).ravel())
            diag = 4.0 / self.grid.h ** 2
            prec = LinearOperator((m, m), dtype=float, matvec=lambda v: v / diag)
            x, info = cg(op, b.ravel(), rtol=tol, atol=0.0, maxiter=maxiter, M=prec)
            if info != 0:
                raise RuntimeError("poisson solve stalled")
            x = x.reshape(shape)
        else:
            raise ValueError(f"unknown Poisson method {method!r}")
        bn = np.linalg.norm(b)
        rel = float(np.linalg.norm(self._minus_a19_interior(x) - b) / bn) if bn > 0 else 0.0
        if rel >= tol:
            raise RuntimeError("poisson solve stalled")
        phi = total * self._inv_r
        phi[1:-1, 1:-1, 1:-1] = x
        return phi, total, rel


@lru_cache(maxsize=16)
def _solver(grid: Grid3D) -> PoissonSolver:
    return PoissonSolver(grid)


def poisson_solve_3d(u2: ScalarField3D, method: str = "dst", tol: float = 1e-8) -> HartreePotential:
    """Solve  -dPhi = 4 pi u2  on the box with monopole Dirichlet data."""
    rho = u2.values
    if not np.all(np.isfinite(rho)):
        raise ValueError("invalid field")
    if np.any(rho < 0):
        raise ValueError("negative charge density")
    phi, total, _ = _solver(u2.grid).solve(rho, method=method, tol=tol)
    return HartreePotential(ScalarField3D(u2.grid, phi), total, total)


def _sample_radial(U: RadialField, grid: Grid3D, center) -> np.ndarray:
    r = U.r
    # even extension so the spline has zero slope at the origin
    rr = np.concatenate([-r[:0:-1], r])
    vv = np.concatenate([U.values[:0:-1], U.values])
    spl = CubicSpline(rr, vv)
    R = grid.radius(center)
    out = np.where(R <= r[-1], spl(np.minimum(R, r[-1])), 0.0)
    return out


def coulomb_symmetry_integral(U: Union[RadialField, ScalarField3D], j: int,
                              x0=(0.0, 0.0, 0.0), grid: Grid3D | None = None) -> float:
    """Quadrature of  int (|x|^{-1} * U^2) U d_j U dx  on a box.

    A radial profile centered at ``x0`` is sampled on ``grid`` (default L=8,
    n=65) translated along with it: the whole-space integral does not depend
    on x0, and keeping the center on a node preserves the discrete
    antisymmetry. A 3D field is used as given. The derivative is a centered
    difference.
    """
    if j not in (1, 2, 3):
        raise ValueError("axis j must be 1, 2 or 3")
    if isinstance(U, RadialField):
        grid = grid or Grid3D(8.0, 65)
        u = _sample_radial(U, grid, (0.0, 0.0, 0.0))
    else:
        grid = U.grid
        u = U.values
    phi = poisson_solve_3d(ScalarField3D(grid, u * u)).values
    du = np.zeros_like(u)
    sl = [slice(1, -1)] * 3
    ax = j - 1
    hi = list(sl)
    lo = list(sl)
    hi[ax] = slice(2, None)
    lo[ax] = slice(None, -2)
    du[1:-1, 1:-1, 1:-1] = (u[tuple(hi)] - u[tuple(lo)]) / (2 * grid.h)
    return integrate_3d(ScalarField3D(grid, phi * u * du))


def coulomb_energy(u: Union[RadialField, ScalarField3D]) -> float:
    """D(u) = int Phi_u u^2."""
    if isinstance(u, RadialField):
        u2 = RadialField(u.grid, u.values ** 2)
        phi = radial_newton_potential(u2).values
        return integrate_radial(RadialField(u.grid, phi * u2.values))
    u2 = ScalarField3D(u.grid, u.values ** 2)
    phi = poisson_solve_3d(u2).values
    return integrate_3d(ScalarField3D(u.grid, phi * u2.values))
