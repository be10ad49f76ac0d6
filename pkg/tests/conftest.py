from pathlib import Path

import numpy as np
import pytest

from spse_lab.numerics_core import Grid3D
from spse_lab.potentials import Potential
from spse_lab.spse_solver import build_rescaled, newton_solve

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

LADDER = (25.0, 50.0, 100.0)
P_LADDER = 10.0 / 3.0 + 0.2
WELL = Potential("quadratic_well", V0=10.0, curvature=10.0, skew=10.0)
BOX = Grid3D(8.0, 65)


@pytest.fixture(scope="session")
def configs_dir():
    return CONFIGS


@pytest.fixture(scope="session")
def ladder_records():
    """Converged solutions of the off-center well on the lambda ladder."""
    return {lam: newton_solve(build_rescaled(lam, P_LADDER, WELL, box=BOX)) for lam in LADDER}


@pytest.fixture(scope="session")
def constant_record():
    """Radial solution with constant potential and the Coulomb term on."""
    V = Potential("constant", V0=1.0)
    return newton_solve(build_rescaled(25.0, P_LADDER, V, box=BOX))


@pytest.fixture
def rng():
    return np.random.default_rng(0)


ACCEPTANCE_LINES: dict = {}


@pytest.fixture
def criterion(request, capsys):
    """Record and print one PASS/FAIL line for an acceptance criterion."""

    def report(number: int, ok: bool, detail: str) -> bool:
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES[number] = line
        with capsys.disabled():
            print("\n" + line)
        return ok

    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
