"""Plain-text ``key = value`` experiment configuration.

Lines starting with ``#`` are comments. Keys are grouped by prefix:
``potential.*``, ``grid.*``, ``solver.*``, ``experiment.*``, ``match.*``,
``output.*`` and the top-level ``seed``. Values are kept as strings and
converted by the typed accessors, so that a configuration round-trips
through :meth:`LabConfig.to_text` unchanged.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

from .asymptotics import a_star_of, case_tag, p_of
from .numerics_core import Grid3D
from .potentials import Potential, potential_from_config

__all__ = ["ConfigError", "LabConfig", "load_config", "parse_config", "REQUIRED_KEYS", "DEFAULTS"]

REQUIRED_KEYS = ("potential.kind", "grid.L", "grid.n")

DEFAULTS = {
    "solver.tol": "1e-9",
    "solver.max_iters": "40",
    "solver.krylov_rtol": "1e-3",
    "solver.max_halvings": "8",
    "solver.poisson": "on",
    "match.tol": "1e-6",
    "match.x_rtol": "1e-10",
    "experiment.sign": "+",
    "experiment.noise": "0.05",
    "experiment.starts": "5",
    "seed": "0",
}

KNOWN_PREFIXES = ("potential.", "grid.", "solver.", "experiment.", "match.", "output.")


class ConfigError(ValueError):
    """Malformed or inconsistent configuration; the message names the key."""


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.replace(" ", "").split(",") if t]


@dataclass(frozen=True)
class LabConfig:
    values: dict = field(default_factory=dict)

    def __getitem__(self, key: str) -> str:
        if key in self.values:
            return self.values[key]
        if key in DEFAULTS:
            return DEFAULTS[key]
        raise ConfigError(f"missing required key: {key}")

    def get(self, key: str, default=None):
        try:
            return self[key]
        except ConfigError:
            return default

    def __contains__(self, key: str) -> bool:
        return key in self.values or key in DEFAULTS

    def float(self, key: str, default=None) -> float:
        raw = self.get(key, default)
        if raw is None:
            raise ConfigError(f"missing required key: {key}")
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"{key}: expected a number, got {raw!r}") from None

    def int(self, key: str, default=None) -> int:
        raw = self.get(key, default)
        if raw is None:
            raise ConfigError(f"missing required key: {key}")
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{key}: expected an integer, got {raw!r}") from None

    def floats(self, key: str, default=None) -> list[float]:
        raw = self.get(key, default)
        if raw is None:
            raise ConfigError(f"missing required key: {key}")
        try:
            return _floats(str(raw))
        except ValueError:
            raise ConfigError(f"{key}: expected comma-separated numbers, got {raw!r}") from None

    # -- typed blocks --------------------------------------------------------
    @property
    def potential(self) -> Potential:
        try:
            return potential_from_config(self.values)
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"potential block: {exc}") from None

    @property
    def box(self) -> Grid3D:
        try:
            return Grid3D(self.float("grid.L"), self.int("grid.n"))
        except ValueError as exc:
            raise ConfigError(f"grid block: {exc}") from None

    @property
    def poisson_on(self) -> bool:
        raw = self["solver.poisson"].lower()
        if raw not in ("on", "off"):
            raise ConfigError(f"solver.poisson: expected on|off, got {raw!r}")
        return raw == "on"

    @property
    def seed(self) -> int:
        return self.int("seed")

    def mass_for(self, eps: float) -> float:
        """Target mass at eps: experiment.a, or experiment.a_factor * a_star(p_eps)."""
        if "experiment.a" in self.values:
            return self.float("experiment.a")
        if "experiment.a_factor" in self.values:
            return self.float("experiment.a_factor") * a_star_of(p_of(eps, self["experiment.sign"]))
        raise ConfigError("missing required key: experiment.a (or experiment.a_factor)")

    # -- serialisation -------------------------------------------------------
    def to_text(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in sorted(self.values.items()))

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:12]

    def with_values(self, **updates) -> "LabConfig":
        vals = dict(self.values)
        vals.update({k.replace("__", "."): str(v) for k, v in updates.items()})
        return LabConfig(vals)

    def validate(self) -> "LabConfig":
        missing = [k for k in REQUIRED_KEYS if k not in self.values]
        if missing:
            raise ConfigError("missing required key(s): " + ", ".join(missing))
        for key in self.values:
            if key != "seed" and not key.startswith(KNOWN_PREFIXES):
                raise ConfigError(f"{key}: unknown key")
        for key in ("solver.tol", "solver.krylov_rtol", "match.tol", "match.x_rtol", "experiment.noise"):
            val = self.float(key)
            if key == "experiment.noise":
                if val < 0:
                    raise ConfigError(f"{key} must be nonnegative")
            elif not val > 0:
                raise ConfigError(f"{key} must be positive")
        for key in ("solver.max_iters", "solver.max_halvings", "experiment.starts"):
            if self.int(key) < 1:
                raise ConfigError(f"{key} must be at least 1")
        self.potential  # noqa: B018  (raises on a malformed block)
        self.box  # noqa: B018
        self.poisson_on  # noqa: B018
        self.seed  # noqa: B018
        sign = self["experiment.sign"]
        if sign not in ("+", "-"):
            raise ConfigError(f"experiment.sign: expected + or -, got {sign!r}")
        eps_list = self.floats("experiment.eps", "")
        if any(e == 0 for e in eps_list):
            raise ConfigError("experiment.eps: values must avoid 0")
        if any(e < 0 for e in eps_list):
            raise ConfigError("experiment.eps: values must be positive (use experiment.sign)")
        if any(lam <= 0 for lam in self.floats("experiment.lambdas", "")):
            raise ConfigError("experiment.lambdas: values must be positive")
        case = self.get("experiment.case")
        if case is not None:
            if case not in ("i", "ii"):
                raise ConfigError(f"experiment.case: expected i or ii, got {case!r}")
            if (case == "i") != (sign == "+"):
                raise ConfigError("experiment.case: case i pairs with sign +, case ii with sign -")
            V0 = self.potential.V0
            for eps in eps_list:
                p = p_of(eps, sign)
                a = self.mass_for(eps)
                try:
                    tag = case_tag(a, V0, a_star_of(p))
                except ValueError:
                    tag = None
                if tag != case:
                    raise ConfigError(
                        f"experiment.case: a={a:.6g} is not in case {case} at eps={eps:g} "
                        f"(threshold V0^-3/2 a_star = {V0 ** -1.5 * a_star_of(p):.6g})")
        return self


def parse_config(text: str, source: str = "<string>") -> LabConfig:
    vals: dict = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, val = (t.strip() for t in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        if key in vals:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key}")
        vals[key] = val
    return LabConfig(vals).validate()


def load_config(path) -> LabConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, str(path))
