"""Analytic external potentials with a declared critical point b0.

With z = x - b0 the families are

* ``constant``        V = V0
* ``quadratic_well``  V = V0 + sum_i c_i z_i^2
* ``gaussian_bump``   V = V0 + s A (exp(-|z|^2 / sigma^2) - 1),  s = +1 (maximum) or -1 (minimum)

Any kind may carry two odd perturbations that leave V(b0), grad V(b0) and
hess V(b0) untouched:

* ``skew``   kappa z_1^3 exp(-|z|^2)   (bounded; breaks the reflection
  symmetry so that the peak of a solution actually moves off b0)
* ``cubic``  k3 z_1^3                  (unbounded; only used to build the
  degenerate counterexample V = 1 + x_1^3)
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["Potential", "HypothesisReport", "check_hypothesis_V", "potential_from_config"]

KINDS = ("constant", "quadratic_well", "gaussian_bump")


@dataclass(frozen=True)
class Potential:
    kind: str
    V0: float = 1.0
    b0: tuple = (0.0, 0.0, 0.0)
    curvature: tuple = (1.0, 1.0, 1.0)
    amplitude: float = 1.0
    width: float = 1.0
    sign: int = 1
    skew: float = 0.0
    cubic: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown potential kind {self.kind!r}")
        b0 = tuple(float(c) for c in self.b0)
        if len(b0) != 3:
            raise ValueError("b0 must have three coordinates")
        object.__setattr__(self, "b0", b0)
        curv = self.curvature
        if np.isscalar(curv):
            curv = (curv,) * 3
        object.__setattr__(self, "curvature", tuple(float(c) for c in curv))
        if self.kind == "gaussian_bump":
            if self.sign not in (1, -1):
                raise ValueError("gaussian_bump sign must be +1 or -1")
            if not (self.amplitude > 0 and self.width > 0):
                raise ValueError("gaussian_bump needs positive amplitude and width")

    # -- evaluation --------------------------------------------------------
    def value(self, x, y, z) -> np.ndarray:
        """Vectorised V on coordinate arrays (broadcastable)."""
        zx, zy, zz = x - self.b0[0], y - self.b0[1], z - self.b0[2]
        r2 = zx * zx + zy * zy + zz * zz
        out = np.full(np.broadcast(zx, zy, zz).shape, self.V0, dtype=float)
        if self.kind == "quadratic_well":
            c = self.curvature
            out = out + c[0] * zx * zx + c[1] * zy * zy + c[2] * zz * zz
        elif self.kind == "gaussian_bump":
            out = out + self.sign * self.amplitude * np.expm1(-r2 / self.width ** 2)
        if self.skew:
            out = out + self.skew * zx ** 3 * np.exp(-r2)
        if self.cubic:
            out = out + self.cubic * zx ** 3
        return out

    def eval(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(self.value(x[0], x[1], x[2]))

    def grad(self, x) -> np.ndarray:
        z = np.asarray(x, dtype=float) - np.asarray(self.b0)
        r2 = float(z @ z)
        g = np.zeros(3)
        if self.kind == "quadratic_well":
            g += 2.0 * np.asarray(self.curvature) * z
        elif self.kind == "gaussian_bump":
            s2 = self.width ** 2
            g += self.sign * self.amplitude * np.exp(-r2 / s2) * (-2.0 * z / s2)
        if self.skew:
            e = np.exp(-r2)
            g += self.skew * z[0] ** 3 * e * (-2.0 * z)
            g[0] += self.skew * 3.0 * z[0] ** 2 * e
        if self.cubic:
            g[0] += 3.0 * self.cubic * z[0] ** 2
        return g

    def hess(self, x) -> np.ndarray:
        z = np.asarray(x, dtype=float) - np.asarray(self.b0)
        r2 = float(z @ z)
        H = np.zeros((3, 3))
        eye = np.eye(3)
        if self.kind == "quadratic_well":
            H += np.diag(2.0 * np.asarray(self.curvature))
        elif self.kind == "gaussian_bump":
            s2 = self.width ** 2
            H += self.sign * self.amplitude * np.exp(-r2 / s2) * (
                4.0 * np.outer(z, z) / s2 ** 2 - 2.0 * eye / s2)
        if self.skew:
            e = np.exp(-r2)
            z1 = z[0]
            S = z1 ** 3 * (4.0 * np.outer(z, z) - 2.0 * eye)
            row = -6.0 * z1 ** 2 * z
            S[0, :] += row
            S[:, 0] += row
            S[0, 0] += 6.0 * z1
            H += self.skew * e * S
        if self.cubic:
            H[0, 0] += 6.0 * self.cubic * z[0]
        return H

    @property
    def hessian_at_b0(self) -> np.ndarray:
        return self.hess(self.b0)


@dataclass(frozen=True)
class HypothesisReport:
    passed: bool
    V0: float
    grad_norm: float
    hess_det: float
    hess_eigenvalues: tuple
    failures: tuple = field(default_factory=tuple)


def check_hypothesis_V(V: Potential, det_tol: float = 1e-12) -> HypothesisReport:
    """V(b0) = V0 > 0, grad V(b0) = 0 and hess V(b0) nonsingular."""
    fails = []
    v0 = V.eval(V.b0)
    if not v0 > 0:
        fails.append(f"V(b0)={v0:.3g} is not positive")
    if abs(v0 - V.V0) > 1e-12 * max(1.0, abs(V.V0)):
        fails.append("declared V0 differs from V(b0)")
    gn = float(np.linalg.norm(V.grad(V.b0)))
    if not gn < 1e-12:
        fails.append(f"|grad V(b0)|={gn:.3g} is not zero")
    H = V.hessian_at_b0
    det = float(np.linalg.det(H))
    if abs(det) <= det_tol:
        fails.append("degenerate Hessian at b0")
    eig = tuple(float(e) for e in np.linalg.eigvalsh(H))
    return HypothesisReport(not fails, float(v0), gn, det, eig, tuple(fails))


def _floats(text, n=None):
    vals = tuple(float(t) for t in str(text).replace(" ", "").split(",") if t)
    if n is not None and len(vals) != n:
        raise ValueError(f"expected {n} comma-separated numbers, got {text!r}")
    return vals


def potential_from_config(cfg: dict) -> Potential:
    """Build a potential from flat ``potential.*`` keys."""
    try:
        kind = cfg["potential.kind"]
    except KeyError:
        raise KeyError("missing required key: potential.kind") from None
    kw = {"kind": kind}
    if "potential.V0" in cfg:
        kw["V0"] = float(cfg["potential.V0"])
    if "potential.b0" in cfg:
        kw["b0"] = _floats(cfg["potential.b0"], 3)
    if "potential.curvature" in cfg:
        c = _floats(cfg["potential.curvature"])
        kw["curvature"] = c * 3 if len(c) == 1 else c
    for key, conv in (("amplitude", float), ("width", float), ("sign", int),
                      ("skew", float), ("cubic", float)):
        if f"potential.{key}" in cfg:
            kw[key] = conv(cfg[f"potential.{key}"])
    return Potential(**kw)
