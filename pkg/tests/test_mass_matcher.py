import numpy as np
import pytest

from spse_lab.asymptotics import Lambda_eps, a_star_of, p_of
from spse_lab.mass_matcher import (
    BracketError,
    mass_curve,
    match_mass,
    scaling_mass_map,
    solver_mass_map,
)
from spse_lab.potentials import Potential

FLAT = Potential("constant", V0=1.0)


def test_toy_root_is_exact():
    res = match_mass(0.2, "+", 1.0, FLAT, bracket=(1.0, 1e4),
                     mass_map=lambda lam: 10.0 * lam ** -0.5, tol=1e-12, x_rtol=1e-14)
    assert res.lambda_eps == pytest.approx(100.0, rel=1e-12)


def test_scaling_root_equals_closed_form():
    eps, a = 0.2, 0.8 * a_star_of(p_of(0.2))
    f = scaling_mass_map(eps, "+", a)
    res = match_mass(eps, "+", a, FLAT, mass_map=f)
    lam0 = Lambda_eps(eps, "+", a, 1.0, a_star_of(p_of(eps)))
    assert abs(res.lambda_eps / lam0 - 1.0) < 1e-8
    assert abs(res.f_at_root - 1.0) < 1e-6
    assert res.case_tag == "i"


def test_solver_map_matches_closed_form():
    eps, V = 0.2, Potential("constant", V0=2.0)
    a = a_star_of(p_of(eps))
    f_solve = solver_mass_map(eps, "+", a, V, poisson_on=False)
    f_exact = scaling_mass_map(eps, "+", a, V0=2.0)
    for lam in (30.0, 60.0):
        assert f_solve(lam) == pytest.approx(f_exact(lam), rel=1e-10)


def test_case_i_map_decreases():
    eps = 0.2
    f = scaling_mass_map(eps, "+", 0.8 * a_star_of(p_of(eps)))
    vals = [f(lam) for lam in (1.0, 2.0, 4.0, 8.0)]
    assert all(b < a for a, b in zip(vals, vals[1:]))


def test_full_map_approaches_scaling_map():
    eps = 0.2
    a = a_star_of(p_of(eps))
    full = solver_mass_map(eps, "+", a, FLAT)
    pure = scaling_mass_map(eps, "+", a)
    gaps = [abs(full(lam) / pure(lam) - 1.0) for lam in (25.0, 100.0, 400.0)]
    assert gaps[0] > gaps[1] > gaps[2]
    # relative gap tracks the coupling gamma ~ lam^{2/(p-2)-2}
    p = p_of(eps)
    rate = np.log(gaps[2] / gaps[0]) / np.log(16.0)
    assert rate == pytest.approx(2 / (p - 2) - 2, abs=0.15)


def test_no_sign_change_raises():
    with pytest.raises(BracketError, match="bracket invalid") as info:
        match_mass(0.2, "+", 1.0, FLAT, mass_map=lambda lam: 0.5, scan=2)
    assert all(f == 0.5 for _, f in info.value.samples)
    with pytest.raises(BracketError):
        match_mass(0.2, "+", 1.0, FLAT, bracket=(1.0, 2.0), mass_map=lambda lam: 3.0)


def test_mass_curve_flags():
    def f(lam):
        if lam == 3.0:
            raise RuntimeError("synthetic failure")
        return 1.0 if lam < 4.0 else 2.0

    pts = mass_curve(0.2, "+", 1.0, FLAT, [5.0, 1.0, 3.0, 2.0], mass_map=f)
    assert [q.lam for q in pts] == [1.0, 2.0, 3.0, 5.0]
    assert not pts[2].ok and "synthetic" in pts[2].error and np.isnan(pts[2].f_value)
    assert pts[3].jump and not pts[1].jump
