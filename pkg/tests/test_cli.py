import numpy as np
import pytest

from spse_lab.cli import main
from spse_lab.config import load_config
from spse_lab.scenarios import emit_csv, format_value, run_scenario

IDENTITY = """potential.kind = constant
potential.V0 = 1
grid.L = 8
grid.n = 65
solver.poisson = off
experiment.eps = 0.13333333333333333
experiment.sign = -
experiment.lambdas = 25
"""


@pytest.fixture
def identity_cfg(tmp_path):
    path = tmp_path / "identity.cfg"
    path.write_text(IDENTITY)
    return path


def test_format_value():
    assert format_value(0.1) == "0.1"
    assert format_value(np.float64(1 / 3)) == repr(1 / 3)
    assert format_value(np.nan) == "nan"
    assert format_value(True) == "1" and format_value(3) == "3"


def test_emit_csv_error_has_path(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(OSError, match="file"):
        emit_csv([{"a": 1}], blocker / "out.csv")


def test_scaling_scenario_passes_and_is_reproducible(identity_cfg, tmp_path):
    cfg = load_config(identity_cfg)
    a = run_scenario("scaling-check", cfg, tmp_path / "a.csv")
    b = run_scenario("scaling-check", cfg, tmp_path / "b.csv")
    assert a.ok and a.rows[0]["rel_err"] < 1e-3
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    header = (tmp_path / "a.csv").read_text().splitlines()[0].split(",")
    assert header[-2:] == ["config_hash", "versions"]
    assert a.rows[0]["config_hash"] == cfg.hash


def test_unknown_scenario(identity_cfg):
    from spse_lab.config import ConfigError
    with pytest.raises(ConfigError, match="unknown scenario"):
        run_scenario("nonsense", load_config(identity_cfg))


def test_scenario_missing_inputs(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text("potential.kind = constant\ngrid.L = 8\ngrid.n = 65\n")
    assert main(["--config", str(path), "scenario", "concentration-rate"]) == 2


def test_exit_codes(identity_cfg, tmp_path, capsys):
    assert main(["--config", str(identity_cfg), "--out", str(tmp_path / "s.csv"),
                 "scenario", "scaling-check"]) == 0
    # a single-lambda ladder cannot show decay: threshold failure
    assert main(["--config", str(identity_cfg), "--out", str(tmp_path / "p.csv"),
                 "scenario", "pohozaev-decay"]) == 1
    bad = tmp_path / "bad.cfg"
    bad.write_text(IDENTITY + "solver.tol = -1\n")
    assert main(["--config", str(bad), "scenario", "scaling-check"]) == 2
    assert "solver.tol" in capsys.readouterr().err
    assert main(["scenario", "scaling-check"]) == 2
    assert main(["solve"]) == 2


def test_solver_error_exit_code(configs_dir, tmp_path):
    cfg = tmp_path / "stall.cfg"
    cfg.write_text((configs_dir / "ladder.cfg").read_text() + "solver.max_iters = 1\n")
    assert main(["--config", str(cfg), "solve", "--lambda", "25", "--eps", "0.2"]) == 3


def test_groundstate_command(tmp_path, capsys):
    assert main(["groundstate", "--p", "3.5", "--out", str(tmp_path / "q.csv")]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "p,center_value,mass,decay_rate,residual_sup"
    assert float(lines[1].split(",")[0]) == 3.5
    assert (tmp_path / "q.csv").read_text().startswith("# grid")


def test_hartree_command(tmp_path, capsys):
    from spse_lab.numerics_core import RadialField, RadialGrid, write_field_csv
    g = RadialGrid(12.0, 2001)
    write_field_csv(RadialField(g, np.exp(-g.nodes ** 2)), tmp_path / "rho.csv")
    assert main(["hartree", "--in", str(tmp_path / "rho.csv"), "--method", "radial",
                 "--out", str(tmp_path / "phi.csv")]) == 0
    assert "total_charge" in capsys.readouterr().out
    assert main(["hartree", "--in", str(tmp_path / "rho.csv"), "--method", "fd3d"]) == 2


def test_solve_then_pohozaev(identity_cfg, tmp_path):
    out, field = tmp_path / "row.csv", tmp_path / "sol.csv"
    assert main(["--config", str(identity_cfg), "--out", str(out), "solve",
                 "--lambda", "25", "--eps", "0.13333333333333333", "--field", str(field)]) == 0
    header, row = out.read_text().splitlines()
    assert header.startswith("lambda,p,mass,xpeak1,xpeak2,xpeak3,corr_norm,residual,iters")
    assert "# meta lambda=25.0" in field.read_text()
    poh = tmp_path / "poh.csv"
    assert main(["--out", str(poh), "pohozaev", "--solution", str(field), "--j", "2"]) == 0
    rows = [ln.split(",") for ln in poh.read_text().splitlines()[1:]]
    assert [r[0] for r in rows][-1] == "residual"
    assert abs(float(rows[-1][1])) < 1e-6


def test_asymptotics_command(tmp_path):
    out = tmp_path / "a.csv"
    assert main(["--out", str(out), "asymptotics", "--eps", "0.1", "--sign", "+",
                 "--a", "1"]) == 0
    head, row = out.read_text().splitlines()
    vals = dict(zip(head.split(","), row.split(",")))
    assert vals["case"] == "i"
    assert float(vals["bracket_lo"]) < float(vals["Lambda"])


def test_match_mass_command_writes_curve(identity_cfg, tmp_path):
    out = tmp_path / "m.csv"
    code = main(["--config", str(identity_cfg), "--out", str(out), "match-mass",
                 "--eps", "0.13333333333333333", "--a", "100"])
    assert code == 0
    head, row = out.read_text().splitlines()
    vals = dict(zip(head.split(","), row.split(",")))
    assert abs(float(vals["f"]) - 1.0) < 1e-6
    assert abs(float(vals["ratio"]) - 1.0) < 1e-8
    curve = (tmp_path / "m_curve.csv").read_text().splitlines()
    assert curve[0].startswith("lambda,f")


def test_mass_curve_command(identity_cfg, tmp_path):
    out = tmp_path / "c.csv"
    assert main(["--config", str(identity_cfg), "--out", str(out), "mass-curve",
                 "--eps", "0.13333333333333333", "--a", "100", "--lambdas", "20", "40"]) == 0
    assert len(out.read_text().splitlines()) == 3


def test_threads_flag_is_accepted(identity_cfg, tmp_path):
    assert main(["--threads", "4", "--config", str(identity_cfg), "asymptotics",
                 "--eps", "0.2", "--a", "1"]) == 0
