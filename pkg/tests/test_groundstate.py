import numpy as np
import pytest

from spse_lab.groundstate import (
    decay_fit,
    ground_state,
    h1_distance,
    mass_of_scaled,
    nehari_residual,
    scaled_residual,
    solve_ground_state,
    translation_moment,
)
from spse_lab.numerics_core import RadialField, RadialGrid

# independent adaptive (DOP853, rtol 1e-13) shooting, frozen to 6 digits
Q0_P4 = 4.337388
A_STAR = 63.78312


@pytest.mark.parametrize("p", [3.0, 10.0 / 3.0, 3.5])
def test_ground_state_certificates(p):
    gs = solve_ground_state(p)
    assert gs.residual_sup < 1e-8
    assert abs(nehari_residual(gs)) < 1e-6
    assert 0.95 <= gs.decay_rate <= 1.05
    assert np.all(gs.values > 0)


def test_center_value_matches_oracle_at_p4():
    assert ground_state(4.0).center_value == pytest.approx(Q0_P4, rel=1e-6)


def test_critical_mass_is_pinned():
    assert ground_state(10.0 / 3.0).mass == pytest.approx(A_STAR, rel=1e-6)
    coarse = solve_ground_state(10.0 / 3.0, r_max=25.0)
    assert coarse.mass == pytest.approx(A_STAR, rel=1e-6)


@pytest.mark.parametrize("p", [3.0, 4.0])
def test_rescaled_profile_solves_scaled_equation(p):
    assert scaled_residual(ground_state(p), 9.0) < 1e-7


def test_domain_errors():
    with pytest.raises(ValueError):
        solve_ground_state(6.0)
    with pytest.raises(ValueError):
        solve_ground_state(2.0)


def test_mass_of_scaled():
    ast = ground_state(10.0 / 3.0).mass
    for lam in (10.0, 100.0, 1000.0):
        assert mass_of_scaled(10.0 / 3.0, lam) == pytest.approx(ast, rel=1e-12)
    m32 = ground_state(3.2).mass
    assert mass_of_scaled(3.2, 16.0) == pytest.approx(16 ** (1 / 6) * m32, rel=1e-12)
    assert mass_of_scaled(3.2, 16.0, V0=4.0) == pytest.approx(
        mass_of_scaled(3.2, 16.0) / 4 ** (5 / 3), rel=1e-12)


def test_h1_distance_linear_in_eps():
    pc = 10.0 / 3.0
    assert h1_distance(pc, pc) < 1e-12
    ratios = [h1_distance(pc + e, pc) / e for e in (0.2, 0.1, 0.05)]
    assert max(ratios) / min(ratios) < 1.5
    assert h1_distance(pc + 0.1, pc) < h1_distance(pc + 0.2, pc)


@pytest.mark.parametrize("k", [1.0, 2.0])
def test_decay_fit_on_exact_tails(k):
    g = RadialGrid(30.0, 3001)
    f = RadialField(g, np.exp(-k * g.nodes) / np.maximum(g.nodes, 1e-300))
    assert abs(decay_fit(f) - k) < 1e-6


def test_decay_fit_of_ground_state_tail():
    assert 0.95 <= decay_fit(ground_state(10.0 / 3.0), (15.0, 25.0)) <= 1.05


def test_decay_fit_rejects_nonpositive_window():
    g = RadialGrid(30.0, 301)
    with pytest.raises(ValueError):
        decay_fit(RadialField(g, -np.ones(301)))


def test_translation_moment_identity():
    lhs, rhs = translation_moment(ground_state(3.5))
    assert lhs == pytest.approx(rhs, rel=1e-6)
