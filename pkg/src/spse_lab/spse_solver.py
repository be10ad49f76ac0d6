"""Fixed-multiplier solver in the rescaled peak frame.

With y = sqrt(lam) (x - x0) and u(x) = (lam/V0)^{1/(p-2)} v(y) the equation

    -du + lam u + (|x|^{-1} * u^2) u = V u^{p-1}

becomes

    -dv + v + gamma Phi_v v = W v^{p-1},   W(y) = V(x0 + y/sqrt(lam)) / V0,

with Phi_v = |y|^{-1} * v^2 and gamma = V0^{-2/(p-2)} lam^{2/(p-2)-2}.

The unknown is split as v = U(. - c) + w. U is the radial reference profile
(the exact solution for W = 1, see :mod:`spse_lab.reference`), sampled
exactly at any center c, and w is a grid function vanishing on the box
boundary and orthogonal to the three translation modes d_i U(. - c). The
Laplacian of U comes from its radial equation and w is discretised with a
fourth-order 5-point-per-axis stencil. Carrying c as an unknown keeps translations exact, so the
peak position is not pinned to the grid. The Newton correction of the
bordered system is computed matrix-free with GMRES, preconditioned by
(-d_h + 1)^{-1} on the w block (a diagonal solve in the sine basis).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy import fft
from scipy.interpolate import CubicSpline, RegularGridInterpolator
from scipy.sparse.linalg import LinearOperator, gmres

from .groundstate import ground_state
from .hartree import PoissonSolver
from .numerics_core import Grid3D, ScalarField3D, lap_dirichlet4, lap_dirichlet4_eigenvalues, norms
from .potentials import Potential
from .reference import RadialReference, reference_profile

__all__ = [
    "DEFAULT_BOX",
    "RescaledProblem",
    "SolutionRecord",
    "NewtonError",
    "build_rescaled",
    "coupling",
    "newton_solve",
    "record_from_field",
    "reduced_gradient",
    "mass_in_original_frame",
    "refined_residual",
    "multistart_uniqueness_probe",
    "ProbeReport",
]

DEFAULT_BOX = Grid3D(8.0, 65)
MAX_SPACING = 0.25
POSITIVITY_FLOOR = -1e-12


class NewtonError(RuntimeError):
    """Raised when the nonlinear solve fails; carries the best residual."""

    def __init__(self, message, best_residual=np.nan):
        super().__init__(f"{message} (best residual {best_residual:.3e})")
        self.reason = message
        self.best_residual = best_residual


def coupling(lam: float, p: float, V0: float) -> float:
    """gamma(lam) = V0^{-2/(p-2)} lam^{2/(p-2)-2}."""
    return V0 ** (-2.0 / (p - 2.0)) * lam ** (2.0 / (p - 2.0) - 2.0)


@dataclass(frozen=True)
class _Base:
    """Reference profile sampled at one center, full-box arrays."""

    center: np.ndarray
    U: np.ndarray
    Phi: np.ndarray
    dU: np.ndarray  # shape (3, n, n, n)


@dataclass(eq=False)
class RescaledProblem:
    lam: float
    p: float
    V: Potential
    x0: tuple
    gamma: float
    box: Grid3D
    poisson_on: bool
    W: np.ndarray = field(repr=False)
    ref: RadialReference = field(repr=False)
    poisson: PoissonSolver = field(repr=False)
    _splines: tuple = field(default=None, repr=False)

    def __post_init__(self):
        su, sphi = self.ref.splines()
        self._splines = (su, su.derivative(), sphi)

    @property
    def V0(self) -> float:
        return self.V.V0

    @property
    def amplitude(self) -> float:
        """(lam/V0)^{1/(p-2)}, the factor between v and u."""
        return (self.lam / self.V0) ** (1.0 / (self.p - 2.0))

    @property
    def mass_factor(self) -> float:
        """int u^2 dx = mass_factor * int v^2 dy."""
        return (self.lam / self.V0) ** (2.0 / (self.p - 2.0)) * self.lam ** (-1.5)

    @property
    def curvature0(self) -> float:
        """U''(0) of the reference profile."""
        return float(self._splines[0].derivative(2)(0.0))

    def to_original(self, y) -> np.ndarray:
        return np.asarray(self.x0) + np.asarray(y) / np.sqrt(self.lam)

    def base(self, center=(0.0, 0.0, 0.0)) -> _Base:
        su, dsu, sphi = self._splines
        c = np.asarray(center, dtype=float)
        R = self.box.radius(c)
        rm = self.ref.r[-1]
        inside = R <= rm
        Rc = np.minimum(R, rm)
        U = np.where(inside, su(Rc), 0.0)
        safe = np.where(R > 0, R, 1.0)
        Phi = np.where(inside, sphi(Rc), self.ref.mass / safe)
        dUdr = np.where(inside, dsu(Rc), 0.0) / safe
        a = self.box.axis
        dU = np.stack([
            dUdr * (a - c[0])[:, None, None],
            dUdr * (a - c[1])[None, :, None],
            dUdr * (a - c[2])[None, None, :],
        ])
        return _Base(c, U, Phi, dU)


def build_rescaled(lam: float, p: float, V: Potential, x0=None, box: Grid3D | None = None,
                   poisson_on: bool = True) -> RescaledProblem:
    """Assemble the rescaled problem on ``box`` (default L=8, n=65)."""
    if not lam > 0:
        raise ValueError("lambda must be positive")
    if not 2.0 < p < 6.0:
        raise ValueError("exponent p must lie in (2, 6)")
    box = box or DEFAULT_BOX
    if not box.is_production():
        raise ValueError("solver box needs at least 33 nodes per axis")
    if box.h > MAX_SPACING:
        raise ValueError("grid too coarse for λ")
    x0 = tuple(float(c) for c in (V.b0 if x0 is None else x0))
    gamma = coupling(lam, p, V.V0) if poisson_on else 0.0
    Y1, Y2, Y3 = box.mesh()
    s = np.sqrt(lam)
    W = V.value(x0[0] + Y1 / s, x0[1] + Y2 / s, x0[2] + Y3 / s) / V.V0
    ref = reference_profile(p, gamma)
    return RescaledProblem(float(lam), float(p), V, x0, float(gamma), box, bool(poisson_on),
                           W, ref, PoissonSolver(box))


@dataclass(eq=False)
class SolutionRecord:
    problem: RescaledProblem
    v: ScalarField3D
    w: np.ndarray
    center_y: np.ndarray
    phi: np.ndarray
    u_mass: float
    mass_rescaled: float
    peak: np.ndarray
    peak_y: np.ndarray
    correction_norm: float
    residual_l2: float
    newton_iters: int
    lagrange_residual: float

    @property
    def lam(self) -> float:
        return self.problem.lam

    @property
    def p(self) -> float:
        return self.problem.p

    def summary(self) -> dict:
        return {
            "lambda": self.lam, "p": self.p, "mass": self.u_mass,
            "xpeak1": float(self.peak[0]), "xpeak2": float(self.peak[1]),
            "xpeak3": float(self.peak[2]), "corr_norm": self.correction_norm,
            "residual": self.residual_l2, "iters": self.newton_iters,
        }


_INT = (slice(1, -1),) * 3


class _Operator:
    """Residual and Jacobian of the bordered discrete problem for a given W.

    The state is x = (w on interior nodes, c). The residual stacks the
    discrete equation and the three scaled constraints <w, d_i U_c> = 0.
    With constant W every translate of the solution is a solution, so the
    constraints are replaced by c = 0.
    """

    def __init__(self, prob: RescaledProblem, W: np.ndarray):
        self.prob = prob
        self.W = W[_INT]
        self.h = prob.box.h
        self.n = prob.box.n
        self.shape = (self.n - 2,) * 3
        self.m = int(np.prod(self.shape))
        self.prec_eig = lap_dirichlet4_eigenvalues(self.n - 2, self.h) + 1.0
        self._cache = None
        self.pinned = bool(np.ptp(self.W) == 0.0)
        b = prob.base()
        # constraints are normalised so that they read as translation lengths
        self.cscale = 1.0 / (np.sum(b.dU[0][_INT] ** 2) * self.h ** 3)

    def base(self, c):
        c = np.asarray(c, dtype=float)
        if self._cache is None or not np.array_equal(self._cache.center, c):
            self._cache = self.prob.base(c)
        return self._cache

    def full(self, w):
        out = np.zeros((self.n,) * 3)
        out[_INT] = w
        return out

    def split(self, x):
        return x[:self.m].reshape(self.shape), x[self.m:]

    def residual(self, x):
        """Returns (G, phi) with phi = Phi_v on interior nodes (None if gamma = 0)."""
        p, g = self.prob.p, self.prob.gamma
        w, c = self.split(x)
        b = self.base(c)
        U = b.U[_INT]
        v = U + w
        lapU_neg = U ** (p - 1) - U
        phi = None
        if g:
            PhiU = b.Phi[_INT]
            lapU_neg = lapU_neg - g * PhiU * U
            phi = PhiU + self.prob.poisson.solve_interior(2.0 * U * w + w * w)
        F = lapU_neg - lap_dirichlet4(w, self.h) + v - self.W * np.abs(v) ** (p - 2) * v
        if phi is not None:
            F += g * phi * v
        h3 = self.h ** 3
        if self.pinned:
            cons = list(c)
        else:
            cons = [self.cscale * np.sum(w * b.dU[i][_INT]) * h3 for i in range(3)]
        return np.concatenate([F.ravel(), cons]), phi

    def jacobian(self, x, G, phi, eps=1e-6):
        p, g = self.prob.p, self.prob.gamma
        w, c = self.split(x)
        b = self.base(c)
        U = b.U[_INT]
        dUi = [b.dU[i][_INT] for i in range(3)]
        v = U + w
        diag = 1.0 - (p - 1) * self.W * np.abs(v) ** (p - 2)
        if phi is not None:
            diag = diag + g * phi
        # center columns by forward differences
        cols = []
        for i in range(3):
            xe = x.copy()
            xe[self.m + i] += eps
            Ge, _ = self.residual(xe)
            cols.append((Ge - G) / eps)
        B = np.column_stack(cols)
        shape, m, h3, cs = self.shape, self.m, self.h ** 3, self.cscale
        solver = self.prob.poisson

        def mv(z):
            d = z[:m].reshape(shape)
            out = -lap_dirichlet4(d, self.h) + diag * d
            if g:
                out += 2.0 * g * solver.solve_interior(v * d) * v
            if self.pinned:
                cons = np.zeros(3)
            else:
                cons = [cs * np.sum(d * dUi[i]) * h3 for i in range(3)]
            res = np.concatenate([out.ravel(), cons])
            return res + B @ z[m:]

        return LinearOperator((m + 3, m + 3), matvec=mv, dtype=float)

    def preconditioner(self):
        shape, eig, m = self.shape, self.prec_eig, self.m

        def mv(z):
            d = fft.idstn(fft.dstn(z[:m].reshape(shape), type=1) / eig, type=1)
            return np.concatenate([d.ravel(), z[m:]])

        return LinearOperator((m + 3, m + 3), matvec=mv, dtype=float)

    def positive(self, w, c) -> bool:
        """No node of v = U_c + w below the positivity floor."""
        return bool(np.min(self.base(c).U[_INT] + w) >= POSITIVITY_FLOOR)

    def norm(self, G):
        F = G[:self.m]
        return float(np.sqrt(np.sum(F * F) * self.h ** 3 + np.sum(G[self.m:] ** 2)))


def _line_search(op: _Operator, x, d, res, max_halvings=8):
    """Backtracking on the residual norm; None, "cone" or the accepted state."""
    t = 1.0
    blocked = False
    for _ in range(max_halvings + 1):  # full step plus the halvings
        xn = x + t * d
        wn, cn = op.split(xn)
        if not op.positive(wn, cn):
            blocked = True
        else:
            Gn, phin = op.residual(xn)
            rn = op.norm(Gn)
            if rn < res:
                return xn, Gn, phin, rn
        t *= 0.5
    return "cone" if blocked else None


def _damped_newton(op: _Operator, x, tol, max_iters, krylov_rtol=1e-3, max_halvings=8,
                   tight_rtol=1e-10):
    """Returns (x, residual, iterations); raises NewtonError on failure."""
    G, phi = op.residual(x)
    res = op.norm(G)
    best = res
    M = op.preconditioner()
    for it in range(max_iters + 1):
        if res < tol:
            return x, res, it
        if it == max_iters:
            break
        J = op.jacobian(x, G, phi)
        d, _ = gmres(J, -G, rtol=krylov_rtol, atol=0.0, restart=80, maxiter=6, M=M)
        step = _line_search(op, x, d, res, max_halvings)
        if not isinstance(step, tuple) and tight_rtol < krylov_rtol:
            # an inexact direction can undershoot the far tail; retry with a tight solve
            d, _ = gmres(J, -G, rtol=tight_rtol, atol=0.0, restart=80, maxiter=20, M=M)
            step = _line_search(op, x, d, res, max_halvings)
        if step is None:
            raise NewtonError("newton stalled", best)
        if step == "cone":
            raise NewtonError("left positive cone", best)
        xn, Gn, phin, rn = step
        x, G, phi, res = xn, Gn, phin, rn
        best = min(best, res)
    raise NewtonError("newton stalled", best)


def _peak(prob: RescaledProblem, base: _Base, w_full: np.ndarray) -> np.ndarray:
    """Maximum of v = U_c + w, linearised about the profile center.

    grad v(c + delta) = U''(0) delta + grad w(c) + O(|delta|^2, |w|), so
    delta = -grad w(c) / U''(0) with grad w interpolated trilinearly.
    """
    box = prob.box
    axis = box.axis
    grads = np.gradient(w_full, box.h)
    c = base.center
    gw = np.array([float(RegularGridInterpolator((axis,) * 3, gi)(c[None, :])[0]) for gi in grads])
    return c - gw / prob.curvature0


def _ground_spline(p: float):
    gs = ground_state(p)
    r = gs.r
    return CubicSpline(np.concatenate([-r[:0:-1], r]), np.concatenate([gs.values[:0:-1], gs.values]))


def _full_phi(prob: RescaledProblem, base: _Base, w_full: np.ndarray) -> np.ndarray:
    """Phi_v on the whole box (monopole data on the boundary for the correction)."""
    if prob.gamma == 0.0:
        return np.zeros_like(w_full)
    rho = 2.0 * base.U * w_full + w_full * w_full
    corr, _, _ = prob.poisson.solve(rho, method="dst")
    return base.Phi + corr


def _record(prob: RescaledProblem, op: _Operator, x: np.ndarray, res: float,
            iters: int) -> SolutionRecord:
    box = prob.box
    h3 = box.h ** 3
    w, c = op.split(x)
    base = prob.base(c)
    w_full = op.full(w)
    v = base.U + w_full
    # exact radial mass of the reference plus the grid mass of the correction
    mass_resc = prob.ref.mass + float(np.sum(2.0 * base.U * w_full + w_full * w_full) * h3)
    y_peak = _peak(prob, base, w_full)
    if np.max(np.abs(y_peak)) >= 0.5 * box.L:
        raise NewtonError("peak left the box core", res)
    Qs = _ground_spline(prob.p)(box.radius(y_peak))
    diff = norms(ScalarField3D(box, v - Qs), 1.0).h1
    corr = prob.amplitude * prob.lam ** (-0.25) * diff
    phi = _full_phi(prob, base, w_full)
    # Lagrange identity with the operators of the discrete problem
    p, g = prob.p, prob.gamma
    U = base.U[_INT]
    vi = v[_INT]
    lapU_neg = U ** (p - 1) - U - g * base.Phi[_INT] * U
    kin = float(np.sum(vi * (lapU_neg - lap_dirichlet4(w, box.h))) * h3)
    l2 = float(np.sum(vi * vi) * h3)
    hart = float(g * np.sum(phi[_INT] * vi * vi) * h3)
    pot = float(np.sum(prob.W[_INT] * np.abs(vi) ** p) * h3)
    lagr = (kin + l2 + hart - pot) / pot
    return SolutionRecord(
        problem=prob, v=ScalarField3D(box, v), w=w.copy(), center_y=np.array(c),
        phi=phi, u_mass=prob.mass_factor * mass_resc, mass_rescaled=mass_resc,
        peak=prob.to_original(y_peak), peak_y=y_peak, correction_norm=float(corr),
        residual_l2=float(res), newton_iters=int(iters), lagrange_residual=float(lagr),
    )


def newton_solve(prob: RescaledProblem, tol: float = 1e-9, max_iters: int = 40,
                 w0: np.ndarray | None = None, continuation_steps: int = 4,
                 krylov_rtol: float = 1e-3, max_halvings: int = 8) -> SolutionRecord:
    """Damped Newton-Krylov solve of the rescaled problem.

    Starts from v = U (w = 0, c = 0) unless ``w0`` (interior correction) is
    given. If the direct solve fails from the default start, the anisotropy
    is switched on gradually, W_t = 1 + t (W - 1).
    """
    if not (tol > 0 and krylov_rtol > 0):
        raise ValueError("tolerances must be positive")
    kw = dict(krylov_rtol=krylov_rtol, max_halvings=max_halvings)
    m = (prob.box.n - 2) ** 3
    x = np.zeros(m + 3)
    if w0 is not None:
        x[:m] = np.asarray(w0, dtype=float).ravel()
    op = _Operator(prob, prob.W)
    try:
        x, res, iters = _damped_newton(op, x, tol, max_iters, **kw)
        return _record(prob, op, x, res, iters)
    except NewtonError as exc:
        if w0 is not None or continuation_steps < 2:
            raise
        first_error = exc
    total = 0
    x = np.zeros(m + 3)
    for t in np.linspace(0.0, 1.0, continuation_steps + 1)[1:]:
        op_t = _Operator(prob, 1.0 + t * (prob.W - 1.0))
        try:
            x, res, iters = _damped_newton(op_t, x, tol, max_iters, **kw)
        except NewtonError:
            raise first_error from None
        total += iters
    return _record(prob, op, x, res, total)


def record_from_field(prob: RescaledProblem, v: np.ndarray, center_y) -> SolutionRecord:
    """Rebuild a record from a stored profile v and its reference center."""
    v = np.asarray(v, dtype=float)
    if v.shape != (prob.box.n,) * 3:
        raise ValueError("field does not match the problem box")
    op = _Operator(prob, prob.W)
    c = np.asarray(center_y, dtype=float)
    w = (v - prob.base(c).U)[_INT]
    x = np.concatenate([w.ravel(), c])
    G, _ = op.residual(x)
    return _record(prob, op, x, op.norm(G), 0)


def reduced_gradient(rec: SolutionRecord) -> np.ndarray:
    """grad V at the located peak."""
    return rec.problem.V.grad(rec.peak)


def mass_in_original_frame(rec: SolutionRecord) -> float:
    """int u^2 dx = (lam/V0)^{2/(p-2)} lam^{-3/2} int v^2 dy."""
    return rec.u_mass


def refined_residual(rec: SolutionRecord) -> float:
    """Residual of the converged v re-evaluated on the once-refined grid.

    The correction is carried over by trilinear interpolation; the reference
    profile is resampled exactly at the same center. This measures
    discretisation error, which only vanishes in the identity case W = 1.
    """
    prob = rec.problem
    box = prob.box
    fine = Grid3D(box.L, 2 * box.n - 1)
    fprob = build_rescaled(prob.lam, prob.p, prob.V, prob.x0, fine, prob.poisson_on)
    w_full = np.zeros((box.n,) * 3)
    w_full[_INT] = rec.w
    it = RegularGridInterpolator((box.axis,) * 3, w_full)
    Y = np.stack(fine.mesh(), axis=-1)[_INT]
    wf = it(Y.reshape(-1, 3))
    op = _Operator(fprob, fprob.W)
    G, _ = op.residual(np.concatenate([wf, rec.center_y]))
    return op.norm(np.concatenate([G[:op.m], np.zeros(3)]))


@dataclass
class ProbeReport:
    distances: np.ndarray
    max_distance: float
    failures: list
    records: list


def multistart_uniqueness_probe(prob: RescaledProblem, k: int = 5, noise: float = 0.05,
                                seed: int = 0, tol: float = 1e-10, **solver_kw) -> ProbeReport:
    """Solve from k randomly perturbed starts and compare the results.

    Start j uses v0 = U (1 + noise * xi_j) with xi_j uniform in [-1, 1] at
    every interior node. Failed starts are recorded, not raised.
    """
    if k < 3:
        raise ValueError("need at least three starts")
    rng = np.random.default_rng(seed)
    Ui = prob.base().U[_INT]
    records, failures = [], []
    for j in range(k):
        xi = rng.uniform(-1.0, 1.0, size=Ui.shape)
        try:
            records.append(newton_solve(prob, tol=tol, w0=noise * xi * Ui, **solver_kw))
        except NewtonError as exc:
            failures.append((j, str(exc)))
            records.append(None)
    ok = [r for r in records if r is not None]
    n_ok = len(ok)
    dist = np.zeros((n_ok, n_ok))
    for a, b in combinations(range(n_ok), 2):
        d = float(np.max(np.abs(ok[a].v.values - ok[b].v.values)))
        dist[a, b] = dist[b, a] = d
    return ProbeReport(dist, float(dist.max()) if n_ok > 1 else np.nan, failures, records)
