import math

import numpy as np
import pytest

from spse_lab.asymptotics import (
    Lambda_eps,
    a_star_of,
    asymptotics_report,
    case_tag,
    fit_rate,
    p_of,
    theorem_bracket,
)


def test_p_of_and_sign_forms():
    assert p_of(0.2, "+") == pytest.approx(10 / 3 + 0.2)
    assert p_of(0.2, -1) == pytest.approx(10 / 3 - 0.2)
    with pytest.raises(ValueError):
        p_of(0.2, "x")


@pytest.mark.parametrize("eps", [0.3, 0.2, 0.15])
def test_unit_base_gives_unit_multiplier(eps):
    ast = a_star_of(p_of(eps))
    assert Lambda_eps(eps, "+", ast, 1.0, ast) == pytest.approx(1.0, abs=1e-14)


def test_closed_form_values():
    # exponent 2(p-2)/(10-3p) = -9.5556 at p = 10/3 + 0.1
    assert Lambda_eps(0.1, "+", 1.0, 1.0, 2.0) == pytest.approx(7.53e2, rel=1e-3)
    lam_ii = Lambda_eps(0.1, "-", 2.0, 1.0, 1.0)
    p = 10 / 3 - 0.1
    assert lam_ii == pytest.approx(2.0 ** (2 * (p - 2) / (10 - 3 * p)), rel=1e-12)
    assert lam_ii > 1.0


def test_mass_critical_rejected():
    with pytest.raises(ValueError, match="mass-critical"):
        Lambda_eps(0.0, "+", 1.0, 1.0, 2.0)


def test_bracket_case_i():
    lo, hi = theorem_bracket(0.1, 1.0, 1.0, 2.0, "i")
    assert lo == pytest.approx(math.exp(4 / 0.9 * math.log(2)), rel=1e-12)
    assert hi == pytest.approx(math.exp(16 / 0.9 * math.log(2)), rel=1e-12)
    assert lo == pytest.approx(2.18e1, rel=2e-3)
    # the quoted 2.24e5 is truncated (the value is 2.2472e5)
    assert hi == pytest.approx(2.24e5, rel=5e-3)


def test_bracket_case_ii_mirrors():
    assert theorem_bracket(0.1, 2.0, 1.0, 1.0, "ii") == pytest.approx(
        theorem_bracket(0.1, 1.0, 1.0, 2.0, "i"), rel=1e-12)


def test_bracket_errors():
    with pytest.raises(ValueError, match="degenerate"):
        theorem_bracket(0.2, 8.0, 4.0, 64.0, "i")
    with pytest.raises(ValueError, match="not consistent"):
        theorem_bracket(0.2, 3.0, 1.0, 2.0, "i")
    with pytest.raises(ValueError):
        theorem_bracket(0.2, 1.0, 1.0, 2.0, "iii")


def test_case_tag():
    assert case_tag(0.5, 1.0, 1.0) == "i"
    assert case_tag(2.0, 1.0, 1.0) == "ii"
    with pytest.raises(ValueError):
        case_tag(1.0, 1.0, 1.0)


def test_fit_rate():
    s = [(x, 1.0 / x) for x in (25.0, 50.0, 100.0)]
    assert fit_rate(s) == pytest.approx(-1.0, abs=1e-10)
    with pytest.raises(ValueError):
        fit_rate(s[:2])
    with pytest.raises(ValueError):
        fit_rate([(1.0, 1.0), (2.0, 0.0), (3.0, 1.0)])


def test_report():
    ast = a_star_of(p_of(0.2))
    rep = asymptotics_report(0.2, "+", 0.8 * ast, lambda_measured=6.0)
    assert rep.Lambda_eps == pytest.approx(3.128368, rel=1e-6)
    assert rep.bracket[0] < rep.Lambda_eps < rep.bracket[1]
    assert rep.ratio == pytest.approx(6.0 / rep.Lambda_eps)
    assert np.isnan(asymptotics_report(0.2, "+", 0.8 * ast).ratio)
