"""Command line interface: ``rsdual <command> SPEC [options]``.

Every command prints a JSON report (validated against the shipped report
schema) or, with ``--pretty``, a short human-readable summary.

Exit codes:

    0  success
    2  invalid spec, grid or data (schema violation, unresolved mollifier, ...)
    3  the rule is not subcritical
    4  the dual equation is not available (simplicity assumption violated)
    5  an identity or numerical check failed
    6  numerical blow-up
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from fractions import Fraction
from pathlib import Path
from typing import Callable

import jsonschema
import numpy as np

from . import __version__
from .core import SpecViolation, homogeneity, symmetry_factor
from .equations import (
    SimplicityViolation,
    base_family,
    characterize_dual_family,
    dual_equation,
    dual_family,
    dual_rule,
    renormalized_equation,
    tangent_equation,
)
from .rules import NotSubcritical, check_subcritical
from .specfile import Problem, SpecError, load_problem, load_schema, parse_rational
from .symbolic import is_nonvanishing

EXIT_OK = 0
EXIT_SPEC = 2
EXIT_SUBCRITICAL = 3
EXIT_SIMPLICITY = 4
EXIT_CHECK_FAILED = 5
EXIT_BLOWUP = 6

REPORT_VERSION = 1


class CommandError(Exception):
    def __init__(self, code: int, kind: str, message: str, result: dict | None = None):
        super().__init__(message)
        self.code = code
        self.kind = kind
        self.result = result or {}


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _require_subcritical(problem: Problem, dual: bool = False) -> None:
    rule = dual_rule(problem) if dual else problem.rule
    report = check_subcritical(rule, problem.scaling)
    if not report:
        raise CommandError(EXIT_SUBCRITICAL, "subcriticality", f"rule is not subcritical: witness {report.witness}")


def _tree_rows(trees, table, problem: Problem, target: str) -> list[dict]:
    rows = []
    for tree in trees:
        rows.append({
            "code": tree.code,
            "homogeneity": str(homogeneity(tree, table, problem.scaling)),
            "symmetry": symmetry_factor(tree),
            "nonvanishing": is_nonvanishing(tree, problem.nonlinearity, target),
            "edges": tree.n_edges,
            "noises": len(tree.noise_edges()),
        })
    rows.sort(key=lambda r: (Fraction(r["homogeneity"]), r["code"]))
    return rows


def cmd_trees(problem: Problem, args, notes: list[str]) -> tuple[int, dict]:
    cutoff = parse_rational(args.cutoff, problem.params) if args.cutoff is not None else problem.cutoff
    _require_subcritical(problem, dual=args.dual)
    t = problem.target
    if args.dual:
        target = t + "~"
        fam = dual_family(problem, cutoff, nonvanishing=False)
        table = dual_rule(problem).table
    else:
        target = t
        fam = base_family(problem, cutoff, nonvanishing=False)
        table = problem.table
    rows = _tree_rows(fam.trees(target), table, problem, target)
    result = {"target": target, "cutoff": str(cutoff), "dual": args.dual, "count": len(rows), "trees": rows}
    if args.dual:
        char = characterize_dual_family(problem, cutoff)
        result["fd_generated_equal"] = char.ok
        result["characterization"] = char.to_json()
        if not char.ok:
            notes.append("the non-vanishing dual listing differs from the set generated by cutting base trees")
    return EXIT_OK, result


def cmd_equations(problem: Problem, args, notes: list[str]) -> tuple[int, dict]:
    _require_subcritical(problem)
    builders: dict[str, Callable] = {"renorm": renormalized_equation, "tangent": tangent_equation, "dual": dual_equation}
    try:
        eq = builders[args.which](problem)
    except SimplicityViolation as exc:
        raise CommandError(EXIT_SIMPLICITY, "simplicity", str(exc), {"simplicity": exc.report.to_json()}) from exc
    notes.extend(eq.notes)
    if eq.missing_constants:
        notes.append(f"{len(eq.missing_constants)} constant(s) not given in the spec file are kept as symbols c[code]")
    return EXIT_OK, eq.to_json()


def cmd_verify(problem: Problem, args, notes: list[str]) -> tuple[int, dict]:
    from .verify import run_suite

    _require_subcritical(problem)
    report = run_suite(problem, inject_fault=args.inject_fault, lift=not args.no_lift)
    notes.extend(report.notes)
    return (EXIT_OK if report.ok else EXIT_CHECK_FAILED), report.to_json()


def _setup(problem: Problem, args, values: dict | None = None):
    from .numerics.config import setup_from_problem

    setup = setup_from_problem(problem, values=values, seed=args.seed)
    setup.config.self_check()
    setup.config.mollifier.check(setup.config.grid.dt, setup.config.grid.dx)
    return setup


def _write_field(field, out: Path, name: str, fmt: str) -> list[str]:
    from .numerics.fieldio import write_binary, write_csv

    out.mkdir(parents=True, exist_ok=True)
    written = []
    if fmt in ("csv", "both"):
        write_csv(field, out / f"{name}.csv")
        written.append(str(out / f"{name}.csv"))
    if fmt in ("binary", "both"):
        write_binary(field, out / f"{name}.bin")
        written.append(str(out / f"{name}.bin"))
    return written


def _grid_json(grid) -> dict:
    return {"Nx": grid.Nx, "T": grid.T, "dt": grid.dt, "Nt": grid.Nt}


def cmd_simulate(problem: Problem, args, notes: list[str]) -> tuple[int, dict]:
    from .numerics.solvers import solve_forward

    setup = _setup(problem, args)
    xi = setup.noise()
    u = solve_forward(setup.config, xi)
    outputs = _write_field(u, Path(args.out), "u", args.format) if args.out else []
    return EXIT_OK, {
        "grid": _grid_json(setup.config.grid),
        "seed": setup.config.seed,
        "eps": setup.config.mollifier.eps,
        "counterterm": setup.config.counterterm.text,
        "max_abs_u": float(np.max(np.abs(u.values))),
        "final_l2": float(np.sqrt(np.sum(u.values[-1] ** 2) * u.grid.dx)),
        "sha256": hashlib.sha256(u.values.tobytes()).hexdigest(),
        "outputs": outputs,
    }


def cmd_check_duality(problem: Problem, args, notes: list[str]) -> tuple[int, dict]:
    from .numerics.checks import duality_check, duality_fields, pde_refinement, random_duality_configs

    setup = _setup(problem, args)
    main = duality_check(setup.config, setup.noise(), setup.h_field(), setup.phi_field())
    result = {"spec_config": main.to_json()}
    ok = main.ok
    levels = args.refinements if args.refinements is not None else int(problem.simulation.get("refinements", 2))
    if levels > 0:
        ref = pde_refinement(setup, levels)
        result["refinement"] = ref.to_json()
        ok = ok and ref.halves
    if args.configs:
        rows = []
        for config, xi, h, phi in random_duality_configs(args.configs, setup.config.seed, setup.config.grid, setup.config.mollifier.eps):
            rows.append(duality_check(config, xi, h, phi).to_json())
        result["random_configs"] = rows
        ok = ok and all(r["adjoint_relative_residual"] <= 1e-8 for r in rows)
    if args.out:
        xi = setup.noise()
        u, v, w, wp = duality_fields(setup.config, xi, setup.h_field(), setup.phi_field())
        out = Path(args.out)
        result["outputs"] = sum((_write_field(f, out, n, args.format) for f, n in ((u, "u"), (v, "v"), (w, "w_adjoint"), (wp, "w_pde"))), [])
    return (EXIT_OK if ok else EXIT_CHECK_FAILED), result


def cmd_check_frechet(problem: Problem, args, notes: list[str]) -> tuple[int, dict]:
    from .numerics.checks import frechet_check
    from .numerics.noise import rng_for

    values = None
    if args.randomize_constants:
        names = sorted(problem.simulation.get("values", {}))
        rng = rng_for(args.seed if args.seed is not None else int(problem.simulation.get("seed", 0)), 2**33)
        values = {n: float(v) for n, v in zip(names, rng.uniform(-1, 1, len(names)))}
        notes.append(f"randomised constants: {values}")
    setup = _setup(problem, args, values)
    rs = [float(r) for r in problem.simulation.get("frechet_r", [0.1, 0.01, 0.001])]
    res = frechet_check(setup, rs)
    if res.exact:
        notes.append("difference quotients match v_h to rounding error (affine solution map); no order is fitted")
    result = res.to_json() | {"constants": setup.values, "seed": setup.config.seed}
    return (EXIT_OK if res.ok else EXIT_CHECK_FAILED), result


COMMANDS = {
    "trees": cmd_trees,
    "equations": cmd_equations,
    "verify": cmd_verify,
    "simulate": cmd_simulate,
    "check-duality": cmd_check_duality,
    "check-frechet": cmd_check_frechet,
}


# ---------------------------------------------------------------------------
# Driver
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rsdual", description="Trees, equations and dual identities for singular SPDE specs.")
    parser.add_argument("--version", action="version", version=f"rsdual {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("spec", help="path to the JSON spec file")
        p.add_argument("--pretty", action="store_true", help="human-readable output instead of JSON")
        p.add_argument("--report", metavar="FILE", help="also write the JSON report to FILE")

    p = sub.add_parser("trees", help="list the tree family of the target type")
    common(p)
    p.add_argument("--cutoff", help="homogeneity cutoff (default: the spec file's verify.cutoff)")
    p.add_argument("--dual", action="store_true", help="list the dual family instead")

    p = sub.add_parser("equations", help="renormalized, tangent or dual equation")
    common(p)
    p.add_argument("--which", choices=["renorm", "tangent", "dual"], default="renorm")

    p = sub.add_parser("verify", help="run the identity suite")
    common(p)
    p.add_argument("--inject-fault", action="store_true", help="corrupt one symmetry factor to exercise the failure path")
    p.add_argument("--no-lift", action="store_true", help="skip the quadrature checks of the shift and telescope identities")

    for name, helptext in (
        ("simulate", "solve the regularised renormalised equation"),
        ("check-duality", "duality residuals of both dual solvers"),
        ("check-frechet", "finite-difference check of the tangent solver"),
    ):
        p = sub.add_parser(name, help=helptext)
        common(p)
        p.add_argument("--seed", type=int, help="noise seed (default: the spec file's simulation.seed)")
        p.add_argument("--out", metavar="DIR", help="directory for field output")
        p.add_argument("--format", choices=["csv", "binary", "both"], default="csv")
        if name == "check-duality":
            p.add_argument("--configs", type=int, default=0, help="additional randomised configurations")
            p.add_argument("--refinements", type=int, help="number of dt halvings for the refinement study")
        if name == "check-frechet":
            p.add_argument("--randomize-constants", action="store_true", help="draw the constants uniformly from [-1, 1]")
    return parser


def validate_report(report: dict) -> None:
    jsonschema.validate(report, load_schema("report.schema.json"))


def _pretty(report: dict) -> str:
    lines = [f"{report['command']} {report['spec']}: {report['status']} (exit {report['exit_code']})"]
    result = report["result"]
    if "error" in report:
        lines.append(f"  {report['error']['kind']}: {report['error']['message']}")
    if report["command"] == "trees" and "trees" in result:
        for row in result["trees"]:
            flag = "" if row["nonvanishing"] else "  (vanishing)"
            lines.append(f"  {row['homogeneity']:>10}  S={row['symmetry']:<3} {row['code']}{flag}")
    elif report["command"] == "equations" and "pretty" in result:
        lhs = {"renorm": "d_t u", "tangent": "d_t v", "dual": "-d_t w"}[result["which"]]
        for comp, text in result["pretty"].items():
            lines.append(f"  [{comp}] {lhs} = {text}")
    elif report["command"] == "verify" and "checks" in result:
        for name, check in result["checks"].items():
            lines.append(f"  {name:<30} {check['status']}")
    elif result:
        lines.append(json.dumps(result, indent=2, default=str))
    lines.extend(f"  note: {n}" for n in report["notes"])
    return "\n".join(lines)


def run(argv: list[str] | None = None) -> tuple[int, dict]:
    from .numerics.functions import FunctionError
    from .numerics.grid import GridError
    from .numerics.noise import ResolutionError
    from .numerics.solvers import BlowUp

    args = build_parser().parse_args(argv)
    notes: list[str] = []
    start = time.perf_counter()
    report = {"version": REPORT_VERSION, "command": args.command, "spec": args.spec, "notes": notes}
    try:
        problem = load_problem(args.spec)
        code, result = COMMANDS[args.command](problem, args, notes)
        report.update(status="ok" if code == EXIT_OK else "fail", exit_code=code, result=result)
    except CommandError as exc:
        report.update(status="error", exit_code=exc.code, result=exc.result, error={"kind": exc.kind, "message": str(exc)})
    except NotSubcritical as exc:
        report.update(status="error", exit_code=EXIT_SUBCRITICAL, result={}, error={"kind": "subcriticality", "message": str(exc)})
    except (SpecError, SpecViolation, GridError, ResolutionError, FunctionError, OSError) as exc:
        report.update(status="error", exit_code=EXIT_SPEC, result={}, error={"kind": type(exc).__name__, "message": str(exc)})
    except BlowUp as exc:
        report.update(status="error", exit_code=EXIT_BLOWUP, result={"step": exc.step, "value": exc.value},
                      error={"kind": "blow-up", "message": str(exc)})
    report["seconds"] = round(time.perf_counter() - start, 4)
    report = json.loads(json.dumps(report, default=str))
    validate_report(report)
    return report["exit_code"], report | {"_pretty": args.pretty, "_report": args.report}


def main(argv: list[str] | None = None) -> int:
    code, report = run(argv)
    pretty, path = report.pop("_pretty"), report.pop("_report")
    text = json.dumps(report, indent=2)
    if path:
        Path(path).write_text(text + "\n")
    print(_pretty(report) if pretty else text)
    return code


if __name__ == "__main__":
    sys.exit(main())
