"""Local Pohozaev identity on a ball around the peak.

Multiplying  -dv + v + gamma Phi v = W v^{p-1}  by d_j v and integrating over
B = B_R(y_peak) gives

    (1/p) int_B d_jW v^p
        = - int_dB d_nu v d_j v + 1/2 int_dB |grad v|^2 nu_j + 1/2 int_dB v^2 nu_j
          - (1/p) int_dB W v^p nu_j + gamma/2 int_dB Phi v^2 nu_j
          - gamma/2 int_B d_jPhi v^2,

where the last (nonlocal bulk) term equals
gamma/2 int_B int (x_j - y_j)/|x - y|^3 v^2(y) v^2(x). It is evaluated
through the gradient of Phi, which avoids the singular kernel altogether.
The identity is stated for the rescaled profile v; the original-frame
identity for u is the same one multiplied by (lam/V0)^{2/(p-2)}.

Fields are sampled off-grid: the reference profile exactly from its radial
splines and the grid correction (and its fourth-order gradient) by cubic
B-splines. Surface
integrals use a Gauss-Legendre x uniform product rule on the sphere, bulk
integrals the same rule times Gauss-Legendre in the radius.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import map_coordinates, spline_filter

from .numerics_core import ScalarField3D, integrate_3d
from .potentials import check_hypothesis_V
from .spse_solver import SolutionRecord

__all__ = [
    "PohozaevReport",
    "evaluate_identity",
    "default_radius",
    "peak_location_estimate",
    "nonlocal_total_force",
    "MIN_SURFACE_POINTS",
]

MIN_SURFACE_POINTS = 500
BOUNDARY_TERMS = ("normal_derivative", "gradient_square", "mass", "potential", "nonlocal_boundary")


@dataclass(frozen=True)
class PohozaevReport:
    d: float
    j: int
    lhs: float
    boundary_terms: dict
    nonlocal_bulk: float
    residual: float

    @property
    def rhs(self) -> float:
        return sum(self.boundary_terms.values()) + self.nonlocal_bulk

    @property
    def scale(self) -> float:
        """Largest individual term, for relative comparisons."""
        vals = [abs(self.lhs), abs(self.nonlocal_bulk), *map(abs, self.boundary_terms.values())]
        return max(vals)

    def rows(self) -> list[tuple[str, float]]:
        out = [("lhs", self.lhs)]
        out += [(k, self.boundary_terms[k]) for k in BOUNDARY_TERMS]
        out += [("nonlocal_bulk", self.nonlocal_bulk), ("residual", self.residual)]
        return out


def default_radius(rec: SolutionRecord) -> float:
    """0.35 of the box half-width, in original coordinates."""
    return 0.35 * rec.problem.box.L / np.sqrt(rec.lam)


def _grad4(f: np.ndarray, h: float):
    """Fourth-order central differences (second order on the two outer layers)."""
    out = []
    for ax in range(3):
        g = np.gradient(f, h, axis=ax)
        z = np.moveaxis(f, ax, 0)
        gi = np.moveaxis(g, ax, 0)
        gi[2:-2] = (z[:-4] - 8.0 * z[1:-3] + 8.0 * z[3:-1] - z[4:]) / (12.0 * h)
        out.append(g)
    return out


class _Interp:
    """Cubic B-spline interpolation of a grid field at arbitrary points."""

    def __init__(self, sampler, f):
        self.origin, self.h = sampler._origin, sampler._h
        self.coef = spline_filter(f, order=3, mode="mirror")

    def __call__(self, pts):
        idx = (np.asarray(pts).T - self.origin) / self.h
        return map_coordinates(self.coef, idx, order=3, mode="mirror", prefilter=False)


class _Sampler:
    """Off-grid v, grad v, Phi, grad Phi of a solution record."""

    def __init__(self, rec: SolutionRecord):
        prob = rec.problem
        box = prob.box
        self.prob = prob
        self.c = np.asarray(rec.center_y, dtype=float)
        su, dsu, sphi = prob._splines
        self.su, self.dsu, self.sphi, self.dsphi = su, dsu, sphi, sphi.derivative()
        self.rmax = prob.ref.r[-1]
        base = prob.base(self.c)
        w = np.zeros((box.n,) * 3)
        w[1:-1, 1:-1, 1:-1] = rec.w
        self._origin = box.axis[0]
        self._h = box.h
        self._w = [_Interp(self, f) for f in (w, *_grad4(w, box.h))]
        self.gamma = prob.gamma
        if self.gamma:
            corr, _, _ = prob.poisson.solve(2.0 * base.U * w + w * w, method="dst")
            self._k = [_Interp(self, f) for f in (corr, *_grad4(corr, box.h))]

    def _radial(self, pts, f, df, far=None, dfar=None):
        z = pts - self.c
        r = np.linalg.norm(z, axis=1)
        inside = r <= self.rmax
        rc = np.minimum(r, self.rmax)
        safe = np.where(r > 0, r, 1.0)
        val = np.where(inside, f(rc), 0.0 if far is None else far(safe))
        dr = np.where(inside, df(rc), 0.0 if dfar is None else dfar(safe))
        grad = (dr / safe)[:, None] * z
        return val, grad

    def v(self, pts):
        val, grad = self._radial(pts, self.su, self.dsu)
        val = val + self._w[0](pts)
        grad = grad + np.column_stack([g(pts) for g in self._w[1:]])
        return val, grad

    def phi(self, pts):
        M = self.prob.ref.mass
        val, grad = self._radial(pts, self.sphi, self.dsphi, lambda r: M / r, lambda r: -M / r ** 2)
        if self.gamma:
            val = val + self._k[0](pts)
            grad = grad + np.column_stack([g(pts) for g in self._k[1:]])
        return val, grad

    def W(self, pts):
        prob = self.prob
        s = np.sqrt(prob.lam)
        x = np.asarray(prob.x0) + pts / s
        val = prob.V.value(x[:, 0], x[:, 1], x[:, 2]) / prob.V0
        grad = np.array([prob.V.grad(xi) for xi in x]) / (prob.V0 * s)
        return val, grad


def _sphere_rule(n_theta: int, n_phi: int):
    """Unit normals and weights of a product rule with total weight 4 pi."""
    mu, wmu = np.polynomial.legendre.leggauss(n_theta)
    ph = 2.0 * np.pi * np.arange(n_phi) / n_phi
    MU, PH = np.meshgrid(mu, ph, indexing="ij")
    st = np.sqrt(1.0 - MU ** 2)
    nu = np.column_stack([(st * np.cos(PH)).ravel(), (st * np.sin(PH)).ravel(), MU.ravel()])
    wts = (wmu[:, None] * np.full(n_phi, 2.0 * np.pi / n_phi)[None, :]).ravel()
    return nu, wts


def evaluate_identity(rec: SolutionRecord, d: float | None = None, j: int = 1,
                      n_theta: int = 24, n_phi: int = 48, n_radial: int = 48) -> PohozaevReport:
    """All terms of the local identity on B_d(x_peak); d in original coordinates."""
    if j not in (1, 2, 3):
        raise ValueError("axis j must be 1, 2 or 3")
    if n_theta * n_phi < MIN_SURFACE_POINTS:
        raise ValueError("surface sampling under-resolved")
    prob = rec.problem
    box = prob.box
    d = default_radius(rec) if d is None else float(d)
    if not d > 0:
        raise ValueError("radius d must be positive")
    R = d * np.sqrt(prob.lam)
    yc = np.asarray(rec.peak_y, dtype=float)
    # spline sampling needs two cells of margin around every point
    if np.max(np.abs(yc)) + R > box.L - 2 * box.h:
        raise ValueError("ball outside box")
    S = _Sampler(rec)
    p, g = prob.p, prob.gamma
    k = j - 1
    nu, wsph = _sphere_rule(n_theta, n_phi)

    # surface terms
    pts = yc + R * nu
    ws = wsph * R * R
    v, gv = S.v(pts)
    Wv, _ = S.W(pts)
    dnu = np.sum(gv * nu, axis=1)
    terms = {
        "normal_derivative": -np.sum(ws * dnu * gv[:, k]),
        "gradient_square": 0.5 * np.sum(ws * np.sum(gv * gv, axis=1) * nu[:, k]),
        "mass": 0.5 * np.sum(ws * v * v * nu[:, k]),
        "potential": -np.sum(ws * Wv * np.abs(v) ** p * nu[:, k]) / p,
        "nonlocal_boundary": 0.0,
    }
    if g:
        ph, _ = S.phi(pts)
        terms["nonlocal_boundary"] = 0.5 * g * np.sum(ws * ph * v * v * nu[:, k])

    # bulk terms
    t, wt = np.polynomial.legendre.leggauss(n_radial)
    r = 0.5 * R * (t + 1.0)
    wr = 0.5 * R * wt * r * r
    bulk_pts = (yc[None, None, :] + r[:, None, None] * nu[None, :, :]).reshape(-1, 3)
    wb = (wr[:, None] * wsph[None, :]).ravel()
    vb, _ = S.v(bulk_pts)
    _, gW = S.W(bulk_pts)
    lhs = float(np.sum(wb * gW[:, k] * np.abs(vb) ** p) / p)
    bulk = 0.0
    if g:
        _, gphi = S.phi(bulk_pts)
        bulk = float(-0.5 * g * np.sum(wb * gphi[:, k] * vb * vb))
    terms = {key: float(val) for key, val in terms.items()}
    resid = lhs - (sum(terms.values()) + bulk)
    return PohozaevReport(float(d), j, lhs, terms, bulk, float(resid))


def _is_flat(V) -> bool:
    return V.kind == "constant" and not V.skew and not V.cubic


def peak_location_estimate(rec: SolutionRecord, d: float | None = None) -> np.ndarray:
    """Peak position implied by the identity, minus the solver's x_lambda.

    Writing grad V(x) = H (x - b0) + R(x) with H = hess V(b0), the three
    identities give H [(x_peak - b0) M0 + m1] = p V0 sqrt(lam) P - int_B R v^p,
    with M0 = int_B v^p, m1 = int_B (x - x_peak) v^p and P the right-hand
    sides. Solving for x_peak and comparing with the solver's value
    measures how well the computed solution honours the identity, in length
    units. For a constant potential there is nothing to estimate and NaNs
    are returned.
    """
    prob = rec.problem
    V = prob.V
    if _is_flat(V):
        return np.full(3, np.nan)
    rep = check_hypothesis_V(V)
    if "degenerate Hessian at b0" in rep.failures:
        raise ValueError("degenerate Hessian at b0")
    H = V.hessian_at_b0
    d = default_radius(rec) if d is None else float(d)
    P = np.array([evaluate_identity(rec, d, j).rhs for j in (1, 2, 3)])
    S = _Sampler(rec)
    R = d * np.sqrt(prob.lam)
    yc = np.asarray(rec.peak_y, dtype=float)
    nu, wsph = _sphere_rule(24, 48)
    t, wt = np.polynomial.legendre.leggauss(48)
    r = 0.5 * R * (t + 1.0)
    wr = 0.5 * R * wt * r * r
    pts = (yc[None, None, :] + r[:, None, None] * nu[None, :, :]).reshape(-1, 3)
    wb = (wr[:, None] * wsph[None, :]).ravel()
    vp = np.abs(S.v(pts)[0]) ** prob.p
    x = prob.to_original(pts)
    gradV = np.array([V.grad(xi) for xi in x])
    rem = gradV - (x - np.asarray(V.b0)) @ H.T
    M0 = np.sum(wb * vp)
    m1 = np.sum(wb[:, None] * vp[:, None] * (x - rec.peak), axis=0)
    rhs = prob.p * prob.V0 * np.sqrt(prob.lam) * P - np.sum(wb[:, None] * vp[:, None] * rem, axis=0)
    x_hat = np.asarray(V.b0) + np.linalg.solve(H, rhs - H @ m1) / M0
    return x_hat - rec.peak


def nonlocal_total_force(rec: SolutionRecord, j: int = 1) -> float:
    """int_box d_jPhi v^2 dy, which vanishes by antisymmetry of the kernel."""
    if j not in (1, 2, 3):
        raise ValueError("axis j must be 1, 2 or 3")
    box = rec.problem.box
    if not rec.problem.gamma:
        return 0.0
    v = rec.v.values
    phi = rec.phi
    dphi = np.gradient(phi, box.h, axis=j - 1)
    return integrate_3d(ScalarField3D(box, dphi * v * v))
