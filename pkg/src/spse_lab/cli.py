"""Command-line entry point ``spse-lab``.

Exit codes: 0 success, 1 a scenario threshold was violated, 2 usage or
configuration error, 3 solver failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import sys
from pathlib import Path

import numpy as np

from .asymptotics import a_star_of, asymptotics_report, case_tag, p_of
from .config import ConfigError, LabConfig, load_config
from .groundstate import nehari_residual, solve_ground_state
from .hartree import poisson_solve_3d, radial_newton_potential
from .mass_matcher import BracketError, mass_curve, match_mass
from .numerics_core import RadialField, ScalarField3D, read_field_csv, write_field_csv
from .pohozaev import evaluate_identity
from .potentials import potential_from_config
from .scenarios import SCENARIOS, VERSIONS, ScenarioError, csv_text, emit_csv, run_scenario
from .spse_solver import NewtonError, build_rescaled, newton_solve, record_from_field

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_SOLVER = 0, 1, 2, 3


class UsageError(ValueError):
    pass


# -- helpers -------------------------------------------------------------------

def _config(args, required=True) -> LabConfig:
    if args.config is None:
        if required:
            raise UsageError("--config is required for this command")
        cfg = LabConfig({})
    else:
        cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_values(seed=args.seed)
    return cfg


def _emit(rows, cfg: LabConfig | None, out) -> None:
    h = cfg.hash if cfg is not None else ""
    for r in rows:
        r["config_hash"] = h
        r["versions"] = VERSIONS
    if out is None:
        sys.stdout.write(csv_text(rows))
    else:
        emit_csv(rows, out)


def _sign(args, cfg: LabConfig) -> str:
    return args.sign if args.sign is not None else cfg["experiment.sign"]


def _mass(args, cfg: LabConfig, eps: float, sign: str) -> float:
    if args.a is not None:
        return args.a
    return cfg.with_values(experiment__sign=sign).mass_for(eps)


def _solver_kw(cfg: LabConfig) -> dict:
    return dict(tol=cfg.float("solver.tol"), max_iters=cfg.int("solver.max_iters"),
                krylov_rtol=cfg.float("solver.krylov_rtol"),
                max_halvings=cfg.int("solver.max_halvings"))


def _write_solution(rec, path) -> None:
    """Profile file: field CSV plus '# meta' lines needed to rebuild the problem."""
    prob = rec.problem
    write_field_csv(rec.v, path)
    meta = [f"lambda={prob.lam!r}", f"p={prob.p!r}",
            "x0=" + ",".join(repr(float(c)) for c in prob.x0),
            "center=" + ",".join(repr(float(c)) for c in rec.center_y),
            f"poisson={'on' if prob.poisson_on else 'off'}"]
    for f in dataclasses.fields(prob.V):
        val = getattr(prob.V, f.name)
        if isinstance(val, tuple):
            val = ",".join(repr(float(c)) for c in val)
        meta.append(f"potential.{f.name}={val}")
    lines = Path(path).read_text().splitlines()
    lines[1:1] = ["# meta " + m for m in meta]
    Path(path).write_text("\n".join(lines) + "\n")


def _read_solution(path):
    field = read_field_csv(path)
    if not isinstance(field, ScalarField3D):
        raise UsageError(f"{path}: solution must be a 3D field")
    meta = {}
    for line in Path(path).read_text().splitlines():
        if line.startswith("# meta "):
            k, v = line[len("# meta "):].split("=", 1)
            meta[k] = v
    try:
        V = potential_from_config({k: v for k, v in meta.items() if k.startswith("potential.")})
        lam, p = float(meta["lambda"]), float(meta["p"])
        x0 = np.array([float(t) for t in meta["x0"].split(",")])
        center = np.array([float(t) for t in meta["center"].split(",")])
        poisson_on = meta.get("poisson", "on") == "on"
    except KeyError as exc:
        raise UsageError(f"{path}: missing solution metadata {exc}") from None
    prob = build_rescaled(lam, p, V, x0=x0, box=field.grid, poisson_on=poisson_on)
    return record_from_field(prob, field.values, center)


# -- subcommands ---------------------------------------------------------------

def cmd_groundstate(args) -> int:
    gs = solve_ground_state(args.p, r_max=args.rmax, tol=args.tol)
    if args.out is not None:
        write_field_csv(gs.profile, args.out)
    print("p,center_value,mass,decay_rate,residual_sup")
    print(f"{gs.p!r},{gs.center_value!r},{gs.mass!r},{gs.decay_rate!r},{gs.residual_sup!r}")
    if args.verbose:
        print(f"# nehari={nehari_residual(gs)!r}", file=sys.stderr)
    return EXIT_OK


def cmd_hartree(args) -> int:
    rho = read_field_csv(args.input)
    if args.method == "radial":
        if not isinstance(rho, RadialField):
            raise UsageError("--method radial needs a radial field (r,value rows)")
        pot = radial_newton_potential(rho)
    else:
        if not isinstance(rho, ScalarField3D):
            raise UsageError("--method fd3d needs a 3D field")
        pot = poisson_solve_3d(rho)
    if args.out is not None:
        write_field_csv(pot.representation, args.out)
    print(f"total_charge={pot.total_charge!r}")
    return EXIT_OK


def cmd_solve(args) -> int:
    cfg = _config(args)
    sign = _sign(args, cfg)
    p = p_of(args.eps, sign)
    cfg = cfg.with_values(experiment__eps=args.eps, experiment__sign=sign,
                          experiment__lambda=args.lam)
    prob = build_rescaled(args.lam, p, cfg.potential, box=cfg.box, poisson_on=cfg.poisson_on)
    rec = newton_solve(prob, **_solver_kw(cfg))
    if args.field is not None:
        _write_solution(rec, args.field)
    _emit([rec.summary()], cfg, args.out)
    return EXIT_OK


def cmd_mass_curve(args) -> int:
    cfg = _config(args)
    sign = _sign(args, cfg)
    a = _mass(args, cfg, args.eps, sign)
    lams = args.lambdas if args.lambdas else cfg.floats("experiment.lambdas")
    cfg = cfg.with_values(experiment__eps=args.eps, experiment__sign=sign, experiment__a=a,
                          experiment__lambdas=",".join(repr(x) for x in lams))
    pts = mass_curve(args.eps, sign, a, cfg.potential, lams, box=cfg.box,
                     poisson_on=cfg.poisson_on, tol=cfg.float("solver.tol"))
    rows = [{"lambda": q.lam, "f": q.f_value, "ok": q.ok, "jump": q.jump, "error": q.error}
            for q in pts]
    _emit(rows, cfg, args.out)
    return EXIT_OK if all(q.ok for q in pts) else EXIT_SOLVER


def cmd_match_mass(args) -> int:
    cfg = _config(args)
    sign = _sign(args, cfg)
    a = _mass(args, cfg, args.eps, sign)
    cfg = cfg.with_values(experiment__eps=args.eps, experiment__sign=sign, experiment__a=a)
    bracket = tuple(args.bracket) if args.bracket else None
    try:
        res = match_mass(args.eps, sign, a, cfg.potential, bracket=bracket,
                         tol=cfg.float("match.tol"), x_rtol=cfg.float("match.x_rtol"),
                         box=cfg.box, poisson_on=cfg.poisson_on,
                         solver_tol=cfg.float("solver.tol"))
    except BracketError as exc:
        curve = [{"lambda": lam, "f": f if f is not None else np.nan, "error": ""}
                 for lam, f in exc.samples]
        curve += [{"lambda": lam, "f": np.nan, "error": msg} for lam, msg in exc.failures]
        curve.sort(key=lambda r: r["lambda"])
        if args.out is not None:
            _emit(curve, cfg, _curve_path(args.out))
        raise
    rep = asymptotics_report(args.eps, sign, a, cfg.potential.V0, lambda_measured=res.lambda_eps)
    row = {"lambda_eps": res.lambda_eps, "f": res.f_at_root, "iters": res.iterations,
           "Lambda": rep.Lambda_eps, "ratio": rep.ratio, "case": res.case_tag,
           "bracket_lo": res.bracket[0], "bracket_hi": res.bracket[1]}
    curve = [{"lambda": lam, "f": f} for lam, f in res.history]
    _emit([row], cfg, args.out)
    if args.out is not None:
        _emit(curve, cfg, _curve_path(args.out))
    return EXIT_OK


def _curve_path(out) -> Path:
    out = Path(out)
    return out.with_name(out.stem + "_curve" + (out.suffix or ".csv"))


def cmd_pohozaev(args) -> int:
    rec = _read_solution(args.solution)
    rep = evaluate_identity(rec, d=args.d, j=args.j)
    rows = [{"term": k, "value": v} for k, v in rep.rows()]
    digest = hashlib.sha256(Path(args.solution).read_bytes()).hexdigest()[:12]
    prov = LabConfig({"experiment.solution": digest, "experiment.d": repr(rep.d),
                      "experiment.j": str(args.j)})
    _emit(rows, prov, args.out)
    return EXIT_OK


def cmd_asymptotics(args) -> int:
    cfg = _config(args, required=False)
    sign = _sign(args, cfg)
    a = _mass(args, cfg, args.eps, sign)
    V0 = cfg.potential.V0 if "potential.kind" in cfg.values else 1.0
    cfg = cfg.with_values(experiment__eps=args.eps, experiment__sign=sign, experiment__a=a)
    rep = asymptotics_report(args.eps, sign, a, V0, lambda_measured=args.lambda_measured)
    ast = a_star_of(rep.p_eps)
    try:
        tag = case_tag(a, V0, ast)
    except ValueError:
        tag = ""
    row = {"eps": rep.eps, "p": rep.p_eps, "a": a, "a_star": ast, "case": tag,
           "Lambda": rep.Lambda_eps, "bracket_lo": rep.bracket[0], "bracket_hi": rep.bracket[1],
           "lambda_measured": rep.lambda_measured, "ratio": rep.ratio}
    _emit([row], cfg, args.out)
    return EXIT_OK


def cmd_scenario(args) -> int:
    cfg = _config(args)
    out = args.out
    if out is None and "output.dir" in cfg.values:
        out = Path(cfg["output.dir"]) / f"{args.name}.csv"
    res = run_scenario(args.name, cfg, out)
    if out is None:
        sys.stdout.write(csv_text(res.rows))
    for flag, ok in res.passed.items():
        print(f"{'PASS' if ok else 'FAIL'} {args.name}:{flag}", file=sys.stderr)
    print(f"# wall_time={res.wall_time:.1f}s", file=sys.stderr)
    return EXIT_OK if res.ok else EXIT_FAIL


# -- parser --------------------------------------------------------------------

def _globals(parser, suppress: bool) -> None:
    d = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", default=d, help="key = value configuration file")
    parser.add_argument("--out", default=d, help="output CSV path (stdout if omitted)")
    parser.add_argument("--seed", type=int, default=d, help="override the config seed")
    parser.add_argument("--threads", type=int, default=d if suppress else 1,
                        help="accepted for compatibility; runs are single-threaded")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="spse-lab", description=__doc__.splitlines()[0])
    _globals(ap, suppress=False)
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        sp = sub.add_parser(name, help=help_)
        _globals(sp, suppress=True)
        sp.set_defaults(func=func)
        return sp

    sp = add("groundstate", cmd_groundstate, "radial ground state Q_p")
    sp.add_argument("--p", type=float, required=True)
    sp.add_argument("--rmax", type=float, default=30.0)
    sp.add_argument("--tol", type=float, default=1e-8)
    sp.add_argument("--verbose", action="store_true")

    sp = add("hartree", cmd_hartree, "Newton potential of a charge density field")
    sp.add_argument("--in", dest="input", required=True, help="density field CSV")
    sp.add_argument("--method", choices=("radial", "fd3d"), default="fd3d")

    sp = add("solve", cmd_solve, "fixed-multiplier solve")
    sp.add_argument("--lambda", dest="lam", type=float, required=True)
    sp.add_argument("--eps", type=float, required=True)
    sp.add_argument("--sign", choices=("+", "-"))
    sp.add_argument("--field", help="also write the solution profile here")

    for name, func in (("mass-curve", cmd_mass_curve), ("match-mass", cmd_match_mass)):
        sp = add(name, func, "mass map f(lambda)" if name == "mass-curve" else "root of f = 1")
        sp.add_argument("--eps", type=float, required=True)
        sp.add_argument("--sign", choices=("+", "-"))
        sp.add_argument("--a", type=float, help="target mass (default from config)")
        if name == "mass-curve":
            sp.add_argument("--lambdas", type=float, nargs="+")
        else:
            sp.add_argument("--bracket", type=float, nargs=2)

    sp = add("pohozaev", cmd_pohozaev, "local Pohozaev identity of a stored solution")
    sp.add_argument("--solution", required=True)
    sp.add_argument("--d", type=float, help="ball radius in original coordinates")
    sp.add_argument("--j", type=int, choices=(1, 2, 3), default=1)

    sp = add("asymptotics", cmd_asymptotics, "closed-form multiplier and window")
    sp.add_argument("--eps", type=float, required=True)
    sp.add_argument("--sign", choices=("+", "-"))
    sp.add_argument("--a", type=float)
    sp.add_argument("--lambda-measured", type=float)

    sp = add("scenario", cmd_scenario, "run a named experiment pipeline")
    sp.add_argument("name", choices=sorted(SCENARIOS))
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return args.func(args)
    except (NewtonError, ScenarioError, BracketError, RuntimeError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (ConfigError, UsageError, ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
