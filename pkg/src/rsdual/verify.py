"""The identity suite behind ``rsdual verify``.

Each check reports a status of ``pass``, ``fail``, ``vacuous`` (nothing to
check) or ``skipped`` (a precondition does not hold, with the reason).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

from .core import DecoratedTree, symmetry_factor
from .equations import (
    PreconditionError,
    base_family,
    characterize_dual_family,
    dual_family,
    verify_dupsilon_identity,
    verify_phi_properties,
    verify_symmetry_lemma,
)
from .extensions import fd_images
from .specfile import Problem, parse_rational


@dataclass
class CheckOutcome:
    name: str
    status: str
    detail: dict = field(default_factory=dict)
    seconds: float = 0.0

    def to_json(self) -> dict:
        return {"status": self.status, "seconds": round(self.seconds, 4), **self.detail}


@dataclass
class SuiteReport:
    checks: list[CheckOutcome]
    notes: list[str]

    @property
    def ok(self) -> bool:
        return all(c.status != "fail" for c in self.checks)

    def to_json(self) -> dict:
        return {"ok": self.ok, "checks": {c.name: c.to_json() for c in self.checks}, "notes": self.notes}


def corrupted_symmetry(target_code: str, factor: int = 2) -> Callable[[DecoratedTree], int]:
    """Symmetry factor that is wrong by ``factor`` on one tree (fault injection)."""

    def symmetry(tree: DecoratedTree) -> int:
        s = symmetry_factor(tree)
        return s * factor if tree.code == target_code else s

    return symmetry


def _run(name: str, fn) -> CheckOutcome:
    start = time.perf_counter()
    try:
        status, detail = fn()
    except PreconditionError as exc:
        status, detail = "skipped", {"reason": str(exc)}
    return CheckOutcome(name, status, detail, time.perf_counter() - start)


def lift_trees(problem: Problem, max_edges: int) -> list[DecoratedTree]:
    """Conforming base trees with at most ``max_edges`` edges below the lift cutoff, and their dualisations."""
    cutoff = parse_rational(problem.verify.get("lift_cutoff", "1/2"), problem.params)
    fam = base_family(problem, cutoff, nonvanishing=False)
    base = [t for t in fam.trees(problem.target) if t.n_edges <= max_edges]
    seen = {t.code for t in base}
    out = list(base)
    for _, _, sigma in fd_images(base):
        if sigma.code not in seen:
            seen.add(sigma.code)
            out.append(sigma)
    return out


def run_suite(problem: Problem, inject_fault: bool = False, lift: bool = True) -> SuiteReport:
    notes: list[str] = []
    cutoff = problem.cutoff
    family = base_family(problem, cutoff)
    trees = [tree for t in problem.table.base_kernel_types for tree in family.trees(t)]
    if not trees:
        notes.append(f"the negative family below {cutoff} is empty; identities hold vacuously")

    def dupsilon():
        results = [verify_dupsilon_identity(tree, problem) for tree in trees]
        if not results:
            return "vacuous", {"trees": 0}
        bad = [r.to_json() for r in results if not r.ok]
        return ("pass" if not bad else "fail"), {"trees": len(results), "failures": bad}

    def symmetry():
        kwargs = {}
        if inject_fault:
            dual = dual_family(problem, cutoff, closed=True)
            victims = sorted(dual.trees(problem.target + "~"), key=lambda s: (-s.n_edges, s.code))
            if victims:
                kwargs["symmetry"] = corrupted_symmetry(victims[0].code)
                notes.append(f"fault injected: symmetry factor of {victims[0].code} doubled")
        res = verify_symmetry_lemma(problem, cutoff, **kwargs)
        if res.base_size == 0 and res.dual_size == 0:
            return "vacuous", res.to_json()
        return ("pass" if res.ok and res.per_tree_ok and res.rederived_ok else "fail"), res.to_json()

    def phi():
        res = verify_phi_properties(problem)
        if res.checked == 0:
            return "vacuous", res.to_json()
        return ("pass" if res.ok else "fail"), res.to_json()

    def characterization():
        res = characterize_dual_family(problem, cutoff)
        if not res.generated and not res.enumerated:
            return "vacuous", res.to_json()
        return ("pass" if res.ok else "fail"), res.to_json()

    checks = [
        _run("dupsilon_identity", dupsilon),
        _run("symmetry_lemma", symmetry),
        _run("phi_properties", phi),
        _run("dual_family_characterization", characterization),
    ]
    if lift:
        checks.extend(run_lift_checks(problem))
    return SuiteReport(checks, notes)


def run_lift_checks(problem: Problem) -> list[CheckOutcome]:
    from .numerics.checks import check_shift_identity, check_telescope_identity
    from .numerics.lift import LiftGrid

    if problem.dim != 2:
        reason = "lift quadrature supports one space dimension only"
        return [CheckOutcome("shift_identity", "skipped", {"reason": reason}),
                CheckOutcome("telescope_identity", "skipped", {"reason": reason})]
    max_edges = int(problem.verify.get("lift_max_edges", 4))
    tol = float(problem.verify.get("lift_tolerance", 1e-6))
    grid = LiftGrid(nx=32, steps=32, t0=0.3, x0=0.1)
    trees = lift_trees(problem, max_edges)

    def run(name, fn):
        start = time.perf_counter()
        check = fn(trees, grid, tol)
        status = "vacuous" if check.cases == 0 else ("pass" if check.ok else "fail")
        return CheckOutcome(name, status, {"trees": len(trees), **check.to_json()}, time.perf_counter() - start)

    return [run("shift_identity", check_shift_identity), run("telescope_identity", check_telescope_identity)]
