"""Grids, discrete fields, quadrature, finite differences and norms.

Radial objects live on a uniform grid ``0 = r_0 < ... < r_{n-1} = r_max``.
Cartesian objects live on the cube ``[-L, L]^3`` with an odd number of nodes
per axis, so that the origin is always a grid node.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np
from scipy.integrate import simpson

__all__ = [
    "RadialGrid",
    "RadialField",
    "Grid3D",
    "ScalarField3D",
    "NormPack",
    "integrate_radial",
    "integrate_3d",
    "trapezoid_weights",
    "norms",
    "laplacian",
    "laplacian_radial",
    "lap7",
    "lap_dirichlet4",
    "lap_dirichlet4_eigenvalues",
    "write_field_csv",
    "read_field_csv",
]


@dataclass(frozen=True)
class RadialGrid:
    r_max: float
    n_nodes: int

    def __post_init__(self):
        if not (np.isfinite(self.r_max) and self.r_max > 0):
            raise ValueError("r_max must be positive")
        if self.n_nodes < 64:
            raise ValueError("radial grid needs at least 64 nodes")

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.r_max, self.n_nodes)

    @property
    def h(self) -> float:
        return self.r_max / (self.n_nodes - 1)


@dataclass(frozen=True)
class RadialField:
    grid: RadialGrid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.grid.n_nodes,):
            raise ValueError("field length does not match grid")
        object.__setattr__(self, "values", vals)

    @property
    def r(self) -> np.ndarray:
        return self.grid.nodes


@dataclass(frozen=True)
class Grid3D:
    L: float
    n: int

    def __post_init__(self):
        if not (np.isfinite(self.L) and self.L > 0):
            raise ValueError("half width L must be positive")
        if self.n < 3 or self.n % 2 == 0:
            raise ValueError("n per axis must be odd and >= 3")

    @property
    def h(self) -> float:
        return 2.0 * self.L / (self.n - 1)

    @property
    def axis(self) -> np.ndarray:
        # built from integer offsets so that the axis is exactly symmetric
        return self.h * (np.arange(self.n) - (self.n - 1) // 2)

    def mesh(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        a = self.axis
        return np.meshgrid(a, a, a, indexing="ij")

    def radius(self, center=(0.0, 0.0, 0.0)) -> np.ndarray:
        a = self.axis
        c = np.asarray(center, dtype=float)
        x = (a - c[0])[:, None, None]
        y = (a - c[1])[None, :, None]
        z = (a - c[2])[None, None, :]
        return np.sqrt(x * x + y * y + z * z)

    def is_production(self) -> bool:
        """Solver boxes need at least 33 nodes per axis."""
        return self.n >= 33


@dataclass(frozen=True)
class ScalarField3D:
    grid: Grid3D
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        n = self.grid.n
        if vals.shape != (n, n, n):
            raise ValueError("field shape does not match grid")
        object.__setattr__(self, "values", vals)


@dataclass(frozen=True)
class NormPack:
    l2: float
    h1: float
    lambda_norm: float
    sup: float


Field = Union[RadialField, ScalarField3D]


def _check_finite(values: np.ndarray) -> None:
    if not np.all(np.isfinite(values)):
        raise ValueError("invalid field")


def integrate_radial(f: RadialField) -> float:
    """Integral over R^3 of a radial function, 4*pi * int r^2 f(r) dr (Simpson)."""
    _check_finite(f.values)
    r = f.r
    return float(4.0 * np.pi * simpson(r * r * f.values, x=r))


def trapezoid_weights(grid: Grid3D) -> np.ndarray:
    """Tensor-product trapezoid weights (1-D factor, multiply along each axis)."""
    w = np.full(grid.n, grid.h)
    w[0] = w[-1] = 0.5 * grid.h
    return w


def integrate_3d(f: ScalarField3D) -> float:
    """Trapezoid rule on the box."""
    _check_finite(f.values)
    w = trapezoid_weights(f.grid)
    # contract one axis at a time; the order is fixed, so results are bit-stable
    s = np.tensordot(f.values, w, axes=([2], [0]))
    s = np.tensordot(s, w, axes=([1], [0]))
    return float(np.dot(s, w))


def _grad_sq_radial(f: RadialField) -> np.ndarray:
    return np.gradient(f.values, f.grid.h, edge_order=2) ** 2


def _grad_sq_3d(f: ScalarField3D) -> np.ndarray:
    g = np.gradient(f.values, f.grid.h, edge_order=2)
    return g[0] ** 2 + g[1] ** 2 + g[2] ** 2


def norms(u: Field, lam: float) -> NormPack:
    """L2, H1, lambda-weighted and sup norms; gradients by centered differences."""
    if not lam > 0:
        raise ValueError("nonpositive multiplier")
    _check_finite(u.values)
    if isinstance(u, RadialField):
        integ = lambda vals: integrate_radial(RadialField(u.grid, vals))  # noqa: E731
        g2 = _grad_sq_radial(u)
    else:
        integ = lambda vals: integrate_3d(ScalarField3D(u.grid, vals))  # noqa: E731
        g2 = _grad_sq_3d(u)
    m = integ(u.values * u.values)
    k = integ(g2)
    return NormPack(
        l2=float(np.sqrt(m)),
        h1=float(np.sqrt(k + m)),
        lambda_norm=float(np.sqrt(k + lam * m)),
        sup=float(np.max(np.abs(u.values))) if u.values.size else 0.0,
    )


def lap7(u: np.ndarray, h: float) -> np.ndarray:
    """7-point Laplacian of a full (n,n,n) array, returned on interior nodes."""
    c = u[1:-1, 1:-1, 1:-1]
    return (
        u[2:, 1:-1, 1:-1] + u[:-2, 1:-1, 1:-1]
        + u[1:-1, 2:, 1:-1] + u[1:-1, :-2, 1:-1]
        + u[1:-1, 1:-1, 2:] + u[1:-1, 1:-1, :-2]
        - 6.0 * c
    ) / (h * h)


def lap_dirichlet4(w: np.ndarray, h: float) -> np.ndarray:
    """Fourth-order Laplacian of an interior array with zero Dirichlet data.

    Uses the 5-point second difference on each axis, with the node outside
    the boundary taken as the odd reflection of the first interior node.
    The operator is diagonal in the type-I sine basis (see
    :func:`lap_dirichlet4_eigenvalues`).
    """
    out = np.zeros_like(w)
    for ax in range(3):
        pad = [(0, 0)] * 3
        pad[ax] = (2, 2)
        z = np.pad(w, pad)
        n = w.shape[ax]
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[ax], hi[ax] = 0, n + 3
        src_lo = [slice(None)] * 3
        src_hi = [slice(None)] * 3
        src_lo[ax], src_hi[ax] = 2, n + 1
        z[tuple(lo)] = -z[tuple(src_lo)]
        z[tuple(hi)] = -z[tuple(src_hi)]

        def sl(a, b, ax=ax):
            idx = [slice(None)] * 3
            idx[ax] = slice(a, b)
            return z[tuple(idx)]

        out += (-sl(0, n) + 16.0 * sl(1, n + 1) - 30.0 * sl(2, n + 2)
                + 16.0 * sl(3, n + 3) - sl(4, n + 4))
    return out / (12.0 * h * h)


def lap_dirichlet4_eigenvalues(m: int, h: float) -> np.ndarray:
    """Eigenvalues of minus :func:`lap_dirichlet4` on an (m, m, m) interior."""
    t = np.arange(1, m + 1) * np.pi / (m + 1)
    e = (30.0 - 32.0 * np.cos(t) + 2.0 * np.cos(2.0 * t)) / (12.0 * h * h)
    return e[:, None, None] + e[None, :, None] + e[None, None, :]


def laplacian(u: ScalarField3D) -> ScalarField3D:
    """Second-order 7-point Laplacian. Boundary nodes are set to zero."""
    if u.grid.n < 5:
        raise ValueError("grid too small for the Laplacian stencil")
    out = np.zeros_like(u.values)
    out[1:-1, 1:-1, 1:-1] = lap7(u.values, u.grid.h)
    return ScalarField3D(u.grid, out)


def laplacian_radial(u: RadialField) -> RadialField:
    """u'' + (2/r) u' with the symmetric limit 3 u''(0) at the origin.

    The last node uses one-sided second-order differences.
    """
    v = u.values
    h = u.grid.h
    r = u.r
    d1 = np.empty_like(v)
    d2 = np.empty_like(v)
    d1[1:-1] = (v[2:] - v[:-2]) / (2 * h)
    d2[1:-1] = (v[2:] - 2 * v[1:-1] + v[:-2]) / (h * h)
    # even extension across r = 0
    d1[0] = 0.0
    d2[0] = 2.0 * (v[1] - v[0]) / (h * h)
    d1[-1] = (3 * v[-1] - 4 * v[-2] + v[-3]) / (2 * h)
    d2[-1] = (2 * v[-1] - 5 * v[-2] + 4 * v[-3] - v[-4]) / (h * h)
    out = np.empty_like(v)
    out[0] = 3.0 * d2[0]
    out[1:] = d2[1:] + 2.0 * d1[1:] / r[1:]
    return RadialField(u.grid, out)


def write_field_csv(f: Field, path) -> None:
    """Plain-text serialization; values in x-fastest order for 3D fields."""
    path = Path(path)
    lines = []
    if isinstance(f, RadialField):
        lines.append(f"# grid L={f.grid.r_max!r} n={f.grid.n_nodes}")
        lines.append("r,value")
        lines.extend(f"{r!r},{v!r}" for r, v in zip(f.r.tolist(), f.values.tolist()))
    else:
        lines.append(f"# grid L={f.grid.L!r} n={f.grid.n}")
        # values[i, j, k] is indexed (x, y, z); x-fastest means Fortran order
        lines.extend(repr(v) for v in f.values.ravel(order="F").tolist())
    try:
        path.write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write field to {path}: {exc}") from exc


def read_field_csv(path) -> Field:
    path = Path(path)
    try:
        text = path.read_text().splitlines()
    except OSError as exc:
        raise OSError(f"cannot read field from {path}: {exc}") from exc
    if not text or not text[0].startswith("# grid"):
        raise ValueError(f"{path}: missing '# grid L=<L> n=<n>' header")
    parts = dict(tok.split("=", 1) for tok in text[0][len("# grid"):].split())
    L = float(parts["L"])
    n = int(parts["n"])
    body = [ln for ln in text[1:] if ln.strip() and not ln.startswith("#")]
    if body and body[0].startswith("r,"):
        rows = np.array([[float(x) for x in ln.split(",")] for ln in body[1:]])
        grid = RadialGrid(L, n)
        if rows.shape != (n, 2):
            raise ValueError(f"{path}: expected {n} radial rows")
        return RadialField(grid, rows[:, 1])
    vals = np.array([float(x) for x in body])
    if vals.size != n ** 3:
        raise ValueError(f"{path}: expected {n ** 3} values, found {vals.size}")
    return ScalarField3D(Grid3D(L, n), vals.reshape((n, n, n), order="F"))
