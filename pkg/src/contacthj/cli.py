"""Command line front end.

Reports go to standard output (JSON, or CSV for trajectories); diagnostics go
to standard error.  Exit status: 0 pass, 1 check failed, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import sections as sec
from . import symplectify as sym
from .contactcore import jacobi_bracket, lambda_batch
from .errors import (AssumptionError, ChartError, ContactHJError, EvaluationError, ExprSyntaxError,
                     IntegrabilityError, UnknownIdentifier)
from .exprdsl import compile_source, contact_layout
from .flows import dissipation_report, integrate
from .systems import load_system, make_preset

EQUATIONS = ("xh", "xh-alt", "ev", "ev-alt", "related-xh", "related-ev", "strong", "legendrian")


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# argument helpers
# ---------------------------------------------------------------------------

def _params(items) -> dict:
    out = {}
    for item in items or []:
        name, sep, value = item.partition("=")
        if not sep or not name.strip():
            raise UsageError(f"--param expects name=value, got {item!r}")
        try:
            out[name.strip()] = float(value)
        except ValueError:
            raise UsageError(f"--param {name}: {value!r} is not a number") from None
    return out


def _vector(text: str, what: str) -> np.ndarray:
    try:
        v = np.array([float(t) for t in text.split(",")], dtype=float)
    except ValueError:
        raise UsageError(f"{what}: expected comma separated numbers, got {text!r}") from None
    if not np.all(np.isfinite(v)):
        raise UsageError(f"{what}: entries must be finite")
    return v


def _system(args):
    params = _params(args.param)
    name = args.system
    path = Path(name)
    if name.endswith(".json") or path.is_file():
        try:
            spec = json.loads(path.read_text(encoding="utf-8"))
        except OSError as exc:
            raise UsageError(f"cannot read system file: {exc}") from None
        if getattr(args, "potential", None):
            raise UsageError("--potential applies to presets only")
        return load_system(spec, params)
    return make_preset(name, params, getattr(args, "potential", None))


def _section(args, layout):
    if not args.section:
        raise UsageError("--section is required")
    try:
        return sec.load_section(Path(args.section), layout)
    except OSError as exc:
        raise UsageError(f"cannot read section file: {exc}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"section file is not valid JSON: {exc}") from None
    except KeyError as exc:
        if isinstance(exc, UnknownIdentifier):
            raise
        raise UsageError(f"section file lacks {exc}") from None


def _grid(args, dim: int) -> sec.Grid:
    if args.random:
        box = sec.Grid.parse(args.grid, dim)
        return sec.Grid(box.bounds, None, args.random, args.seed)
    return sec.Grid.parse(args.grid, dim)


def _clean(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        return _clean(obj.item())
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return obj


def _emit(report: dict, out) -> int:
    out.write(json.dumps(_clean(report), indent=2) + "\n")
    return 0 if report.get("pass") else 1


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_simulate(args, out) -> int:
    system = _system(args)
    x0 = _vector(args.x0, "--x0")
    if x0.shape[0] != system.layout.dim:
        raise UsageError(f"--x0 needs {system.layout.dim} entries ({', '.join(system.layout.names)})")
    traj = integrate(system.H, args.field, x0, args.t_end, args.dt)
    rep = dissipation_report(traj, system.H)
    if traj.blew_up:
        print(f"warning: trajectory left |x| <= 1e12 at t={traj.times[-1]:g}", file=sys.stderr)
    if args.format == "csv":
        out.write(traj.to_csv())
        out.write(f"# field={traj.kind} samples={len(traj)} blew_up={str(traj.blew_up).lower()}\n")
        out.write(f"# H drift max|H(t)-H(0)| = {rep.conservation_drift!r}\n")
        if rep.rate_defect is not None:
            out.write(f"# max|d/dt log H + dH/dz| = {rep.rate_defect!r}\n")
    else:
        report = {
            "command": "simulate",
            "pass": not traj.blew_up,
            "system": system.name,
            "field": traj.kind,
            "samples": len(traj),
            "blew_up": traj.blew_up,
            "H_drift": rep.conservation_drift,
            "rate_defect": rep.rate_defect,
            "trajectory": traj.records(),
        }
        out.write(json.dumps(_clean(report)) + "\n")
    return 1 if traj.blew_up else 0


def cmd_verify(args, out) -> int:
    system = _system(args)
    section = _section(args, system.layout)
    if section.n != system.n:
        raise UsageError(f"section has n={section.n}, system has n={system.n}")
    H = system.H
    eq = args.equation
    qxr = isinstance(section, sec.SectionQxR)
    need_qxr = eq in ("xh", "ev", "strong")
    need_q = eq in ("xh-alt", "ev-alt", "legendrian")
    if need_qxr and not qxr:
        raise UsageError(f"--equation {eq} needs a section over QxR")
    if need_q and qxr:
        raise UsageError(f"--equation {eq} needs a section over Q")
    grid = _grid(args, section.n + (1 if qxr else 0))
    tol = args.tol
    if eq == "xh":
        r = sec.hj_residual_xh(H, section, grid, tol)
    elif eq == "ev":
        r = sec.hj_residual_ev(H, section, grid, tol)
    elif eq == "xh-alt":
        r = sec.hj_residual_xh_alt(H, section, grid, tol)
    elif eq == "ev-alt":
        r = sec.hj_residual_ev_alt(H, section, grid, tol)
    elif eq == "strong":
        r = sec.strong_solution_check(H, section, grid, tol)
    elif eq == "legendrian":
        r = sec.legendrian_check(section, grid, tol)
    else:
        kind = "hamiltonian" if eq == "related-xh" else "evolution"
        r = sec.gamma_related_check(H, kind, section, grid, tol)
    report = r.to_dict()
    report["command"] = "verify"
    report["equation"] = eq
    report["system"] = system.name
    if r.status == sec.VIOLATED:
        print(f"assumptions violated: {r.extra.get('assumptions')}", file=sys.stderr)
    return _emit(report, out)


def cmd_classify(args, out) -> int:
    layout = _system(args).layout if args.system else None
    section = _section(args, layout)
    if isinstance(section, sec.SectionQxR):
        report = sec.classify_section(section, _grid(args, section.n + 1), args.tol).to_dict()
    else:
        r = sec.legendrian_check(section, _grid(args, section.n), args.tol)
        report = r.to_dict()
        report["command"] = "classify"
        report["legendrian"] = r.passed
    return _emit(report, out)


def cmd_bracket(args, out) -> int:
    x = _vector(args.at, "--at")
    if args.system:
        layout = _system(args).layout
    else:
        if x.shape[0] < 3 or x.shape[0] % 2 == 0:
            raise UsageError("--at needs 2n+1 coordinates")
        layout = contact_layout((x.shape[0] - 1) // 2, params=_params(args.param))
    if x.shape[0] != layout.dim:
        raise UsageError(f"--at needs {layout.dim} entries ({', '.join(layout.names)})")
    f = compile_source(args.f, layout)
    g = compile_source(args.g, layout)
    value = jacobi_bracket(f, g, x)
    lam = float(lambda_batch(f, g, x[None, :])[0])
    report = {"command": "bracket", "pass": True, "f": args.f, "g": args.g,
              "at": [float(v) for v in x], "value": value, "lambda": lam}
    return _emit(report, out)


def cmd_symplectify_check(args, out) -> int:
    system = _system(args)
    n = system.n
    rng = np.random.default_rng(args.seed)
    m = args.samples
    X = rng.uniform(-2.0, 2.0, size=(m, 2 * n + 2))
    X[:, 2 * n + 1] = rng.choice([-1.0, 1.0], size=m) * rng.uniform(0.1, 10.0, size=m)
    r = sym.pushforward_check(system.H, X, args.tol)
    Ht = sym.homogenize(system.H)
    base = Ht.values(X)
    homog = 0.0
    for s in (-2.0, 0.5, 3.0):
        Y = X.copy()
        Y[:, n + 1:] *= s
        homog = max(homog, float(np.max(np.abs(Ht.values(Y) - s * base))))
    report = r.to_dict()
    report["command"] = "symplectify-check"
    report["system"] = system.name
    report["homogeneity_defect"] = homog
    report["pass"] = r.passed and homog <= max(args.tol, 1e-12)
    return _emit(report, out)


def cmd_lift(args, out) -> int:
    layout = _system(args).layout if args.system else None
    section = _section(args, layout)
    if not isinstance(section, sec.SectionQxR):
        raise UsageError("lift needs a section over QxR")
    grid = _grid(args, section.n + 1)
    sigma = None
    if args.sigma:
        sigma = compile_source(args.sigma, section.layout)
    base = _vector(args.base, "--base") if args.base else None
    try:
        lifted = sym.lift_section(section, sigma, grid, args.tol, base)
    except (AssumptionError, IntegrabilityError) as exc:
        print(f"lift refused: {exc}", file=sys.stderr)
        return _emit({"command": "lift", "pass": False, "status": sec.VIOLATED,
                      "reason": str(exc), "max_residual": None, "witness": None,
                      "samples": int(grid.points().shape[0])}, out)
    r = sym.lagrangian_defect(lifted, grid, args.tol)
    report = r.to_dict()
    report["command"] = "lift"
    report.update(_clean(lifted.info))
    if args.values:
        X = grid.points()
        report["values"] = {
            "points": X,
            "gamma_t": lifted.gamma_t.values(X),
            "gamma_Q": np.stack([c.values(X) for c in lifted.components], axis=1),
        }
    return _emit(report, out)


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="contacthj",
                                 description="Contact Hamiltonian flows and Hamilton-Jacobi checks.")
    sub = ap.add_subparsers(dest="command", required=True)

    def system_opts(p, required=True):
        p.add_argument("--system", required=required,
                       help="preset (linear-dissipation, ideal-gas) or system JSON file")
        p.add_argument("--param", action="append", metavar="NAME=VALUE", help="bind a parameter")
        p.add_argument("--potential", help="potential V(q1) for linear-dissipation")

    def check_opts(p):
        p.add_argument("--grid", default="-1:1:5", help='"lo:hi:count" per axis, comma separated')
        p.add_argument("--random", type=int, default=0, metavar="N",
                       help="draw N uniform points in the grid box instead")
        p.add_argument("--tol", type=float, default=sec.DEFAULT_TOL)
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("simulate", help="integrate X_H or E_H with RK4")
    system_opts(p)
    p.add_argument("--field", choices=("hamiltonian", "evolution"), default="hamiltonian")
    p.add_argument("--x0", required=True, help="initial state q..., p..., z")
    p.add_argument("--t-end", type=float, required=True)
    p.add_argument("--dt", type=float, required=True)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="evaluate a Hamilton-Jacobi residual on a grid")
    system_opts(p)
    p.add_argument("--section", required=True)
    p.add_argument("--equation", choices=EQUATIONS, required=True)
    check_opts(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("classify", help="coisotropy / Legendrian tests of a section")
    system_opts(p, required=False)
    p.add_argument("--section", required=True)
    check_opts(p)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("bracket", help="Jacobi bracket {f, g} at a state")
    system_opts(p, required=False)
    p.add_argument("--f", required=True)
    p.add_argument("--g", required=True)
    p.add_argument("--at", required=True)
    p.set_defaults(func=cmd_bracket)

    p = sub.add_parser("symplectify-check", help="pushforward and homogeneity of the symplectified H")
    system_opts(p)
    p.add_argument("--samples", type=int, default=50)
    p.add_argument("--tol", type=float, default=sec.DEFAULT_TOL)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_symplectify_check)

    p = sub.add_parser("lift", help="lift a contact solution to a Lagrangian section")
    system_opts(p, required=False)
    p.add_argument("--section", required=True)
    p.add_argument("--sigma", help="proportionality function sigma(q, z)")
    p.add_argument("--base", help="base point q of the gauge g = 0")
    p.add_argument("--values", action="store_true", help="include lifted values on the grid")
    check_opts(p)
    p.set_defaults(func=cmd_lift)
    return ap


# options whose values may legitimately start with "-" (negative numbers,
# expressions such as "-0.2*q1")
_VALUE_OPTIONS = {"--grid", "--x0", "--at", "--base", "--potential", "--f", "--g", "--sigma"}


def _glue_values(argv):
    out = []
    it = iter(argv)
    for tok in it:
        if tok in _VALUE_OPTIONS:
            nxt = next(it, None)
            if nxt is None:
                out.append(tok)
            elif nxt.startswith("-") and not nxt.startswith("--"):
                out.append(f"{tok}={nxt}")
            else:
                out.extend([tok, nxt])
        else:
            out.append(tok)
    return out


def main(argv=None, out=None) -> int:
    out = sys.stdout if out is None else out
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parser.parse_args(_glue_values(argv))
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args, out)
    except (UsageError, ExprSyntaxError, UnknownIdentifier, ChartError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except EvaluationError as exc:
        print(f"evaluation failed: {exc}", file=sys.stderr)
        return 1
    except ContactHJError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main_entry() -> None:
    sys.exit(main())
