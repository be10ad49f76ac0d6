import pytest

from spse_lab.config import ConfigError, LabConfig, load_config, parse_config

BASE = """
# comment line
potential.kind = quadratic_well   # trailing comment
potential.V0 = 1
grid.L = 8
grid.n = 65
experiment.eps = 0.3, 0.2, 0.15
experiment.a_factor = 0.8
"""


def test_parse_and_accessors():
    cfg = parse_config(BASE)
    assert cfg["potential.kind"] == "quadratic_well"
    assert cfg.floats("experiment.eps") == [0.3, 0.2, 0.15]
    assert cfg.float("solver.tol") == 1e-9  # default
    assert cfg.box.n == 65 and cfg.potential.V0 == 1.0
    assert cfg.poisson_on and cfg.seed == 0


def test_round_trip(tmp_path):
    cfg = parse_config(BASE)
    (tmp_path / "c.cfg").write_text(cfg.to_text())
    back = load_config(tmp_path / "c.cfg")
    assert back == cfg and back.hash == cfg.hash


def test_hash_tracks_values():
    cfg = parse_config(BASE)
    assert cfg.with_values(seed=1).hash != cfg.hash
    assert parse_config(BASE).hash == cfg.hash


def test_missing_keys_are_listed():
    with pytest.raises(ConfigError, match="grid.L, grid.n"):
        parse_config("potential.kind = constant\n")


def test_negative_tolerance_names_key():
    with pytest.raises(ConfigError, match="solver.tol"):
        parse_config(BASE + "solver.tol = -1e-9\n")


@pytest.mark.parametrize("line, key", [
    ("experiment.eps = 0.2, 0", "experiment.eps"),
    ("experiment.lambdas = 25, -1", "experiment.lambdas"),
    ("solver.poisson = maybe", "solver.poisson"),
    ("bogus.key = 1", "bogus.key"),
    ("experiment.sign = *", "experiment.sign"),
])
def test_invalid_values(line, key):
    text = BASE.replace("experiment.eps = 0.3, 0.2, 0.15\n", "") if "eps" in line else BASE
    with pytest.raises(ConfigError, match=key):
        parse_config(text + line + "\n")


def test_case_consistency():
    parse_config(BASE + "experiment.case = i\n")
    with pytest.raises(ConfigError, match="experiment.case"):
        parse_config(BASE + "experiment.case = ii\n")
    with pytest.raises(ConfigError, match="not in case i"):
        parse_config(BASE.replace("0.8", "1.25") + "experiment.case = i\n")


def test_syntax_errors():
    with pytest.raises(ConfigError, match="duplicate key grid.n"):
        parse_config(BASE + "grid.n = 33\n")
    with pytest.raises(ConfigError, match="expected 'key = value'"):
        parse_config(BASE + "just words\n")


def test_missing_file_has_path(tmp_path):
    with pytest.raises(OSError, match="nope.cfg"):
        load_config(tmp_path / "nope.cfg")


def test_mass_for():
    cfg = parse_config(BASE)
    assert cfg.mass_for(0.2) == pytest.approx(0.8 * 43.361830, rel=1e-6)
    with pytest.raises(ConfigError):
        LabConfig({"potential.kind": "constant"}).mass_for(0.2)
