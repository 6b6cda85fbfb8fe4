"""Renormalized, tangent and dual equations as term lists, and the
single-equation identities that tie the dual counterterms to the original ones.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable

from .core import DecoratedTree, SpecViolation, base_type, dual_type, homogeneity, is_zero, symmetry_factor, unit
from .extensions import distinguished_node, dualize_at, dualize_cut, multiplicity_m, reroot_hat, reroot_plain
from .rules import TreeFamily, enumerate_trees, extend_rule_dual, q_project
from .specfile import Problem
from .symbolic import (
    DRIFT,
    SymExpr,
    frechet_derivative,
    is_nonvanishing,
    render,
    to_json,
    transport_direction,
    upsilon,
    upsilon_dual,
)

TANGENT = "v"
DUAL = "w"


class PreconditionError(ValueError):
    """An identity was requested outside the setting in which it is stated."""


# ---------------------------------------------------------------------------
# Families
# ---------------------------------------------------------------------------


def _lattice_step(values: Iterable[Fraction], cutoff: Fraction) -> Fraction:
    """A positive number smaller than the gap between ``cutoff`` and any larger attainable homogeneity."""
    den = 1
    for v in values:
        den = math.lcm(den, Fraction(v).denominator)
    return Fraction(1, 2 * den * cutoff.denominator)


def closed_cutoff(problem_or_table, cutoff: Fraction) -> Fraction:
    """Strict cutoff equivalent to ``|tau| <= cutoff`` for the given homogeneities."""
    table = getattr(problem_or_table, "table", problem_or_table)
    return cutoff + _lattice_step(table.hom.values(), Fraction(cutoff))


def base_family(
    problem: Problem,
    cutoff: Fraction | None = None,
    closed: bool = False,
    nonvanishing: bool = True,
    target: str | None = None,
) -> TreeFamily:
    """Conforming trees of the base rule below (or at, when ``closed``) the cutoff."""
    cutoff = problem.cutoff if cutoff is None else Fraction(cutoff)
    strict = closed_cutoff(problem, cutoff) if closed else cutoff
    targets = [target] if target else list(problem.table.base_kernel_types)
    fam = enumerate_trees(problem.rule, problem.scaling, strict, node_cap=problem.node_cap, targets=targets)
    if nonvanishing:
        fam = fam.filtered(lambda t, tree: is_nonvanishing(tree, problem.nonlinearity, t))
    return fam


def dual_rule(problem: Problem):
    return extend_rule_dual(problem.rule, problem.theta, problem.dual_cap)


def dual_family(
    problem: Problem,
    cutoff: Fraction | None = None,
    closed: bool = False,
    nonvanishing: bool = True,
) -> TreeFamily:
    """Trees of the kernel-dual rule with a dual target, optionally filtered by non-vanishing."""
    cutoff = problem.cutoff if cutoff is None else Fraction(cutoff)
    rule = dual_rule(problem)
    strict = closed_cutoff(rule.table, cutoff) if closed else cutoff
    targets = [dual_type(t) for t in problem.table.base_kernel_types]
    fam = enumerate_trees(rule, problem.scaling, strict, node_cap=problem.node_cap, targets=targets)
    if nonvanishing:
        fam = fam.filtered(lambda t, tree: is_nonvanishing(tree, problem.nonlinearity, t))
    return fam


# ---------------------------------------------------------------------------
# Constants
# ---------------------------------------------------------------------------


def vanishes_by_symmetry(tree: DecoratedTree) -> str | None:
    """Reason why the expectation defining a constant is zero for a centred,
    reflection-symmetric Gaussian noise, or ``None``."""
    counts = Counter(base_type(tree.edge_type[v]) for v in tree.noise_edges())
    odd = sorted(xi for xi, n in counts.items() if n % 2)
    if odd:
        return f"odd number of {odd[0]} leaves"
    spatial = sum(sum(tree.node_dec[v][1:]) for v in range(tree.size))
    spatial += sum(sum(tree.edge_dec[v][1:]) for v in tree.edges())
    if spatial % 2:
        return "odd total spatial degree"
    return None


@dataclass
class ResolvedConstant:
    value: Fraction | float | str
    source: str  # "spec", "symmetry" or "default"
    note: str = ""

    @property
    def is_zero(self) -> bool:
        return not isinstance(self.value, str) and self.value == 0

    def text(self) -> str:
        return self.value if isinstance(self.value, str) else str(self.value)


@dataclass
class RenormConstants:
    """Constants ``c_tau`` keyed by tree code: numbers or named symbols."""

    values: dict[str, Fraction | float | str] = field(default_factory=dict)

    def resolve(self, tree: DecoratedTree) -> ResolvedConstant:
        code = tree.code
        if code in self.values:
            return ResolvedConstant(self.values[code], "spec")
        reason = vanishes_by_symmetry(tree)
        if reason:
            return ResolvedConstant(Fraction(0), "symmetry", reason)
        return ResolvedConstant(f"c[{code}]", "default", "no constant supplied; symbol kept")

    def unknown_keys(self, family_codes: set[str]) -> list[str]:
        return sorted(set(self.values) - family_codes)


# ---------------------------------------------------------------------------
# Term lists
# ---------------------------------------------------------------------------


@dataclass
class EquationTerm:
    kind: str  # drift | noise | cameron-martin | counterterm | transport | source | operator
    component: str
    expr: SymExpr | None = None
    noise: str | None = None
    tree: str | None = None
    constant: str | None = None
    constant_source: str | None = None
    symmetry: int | None = None
    direction: int | None = None
    sign: int = 1

    def display(self, variable: str | None = None) -> str:
        """ASCII form of the term, e.g. ``C1*(g''(u)g(u)+g'(u)^2)*v``."""
        if self.kind == "operator":
            return f"L*{variable or DUAL}"
        if self.kind == "source":
            return "phi"
        if self.kind == "transport":
            pre = "-" if self.sign < 0 else ""
            return f"{pre}{self._prefactor()}d_{self.direction} {variable or DUAL}"
        body = _factored(self.expr, variable)
        if self.kind in ("noise", "cameron-martin"):
            factor = self.noise if self.kind == "noise" else f"h[{self.noise}]"
            body = {"1": factor, "-1": f"-{factor}"}.get(body, f"{body}*{factor}")
        if self.kind == "counterterm":
            if body.startswith("-"):
                body = f"({body})"
            return f"{self._prefactor()}{body}"
        return body

    def _prefactor(self) -> str:
        c = self.constant or "1"
        s = self.symmetry or 1
        return f"{c}*" if s == 1 else f"{c}/{s}*"

    def to_json(self, variable: str | None = None) -> dict:
        out = {"kind": self.kind, "component": self.component, "text": self.display(variable)}
        if self.expr is not None:
            out["expr"] = to_json(self.expr)
        for key in ("noise", "tree", "constant", "constant_source", "symmetry", "direction"):
            value = getattr(self, key)
            if value is not None:
                out[key] = value
        if self.kind == "transport":
            out["sign"] = self.sign
        return out


def _factored(expr: SymExpr, variable: str | None) -> str:
    """Render ``a(u)*v`` as ``(a)*v`` when the term is linear in one plain variable."""
    if variable is None:
        return render(expr)
    lin = [v for v in expr.variables() if v.slot == variable]
    if len(lin) == 1 and is_zero(lin[0].deriv):
        v = lin[0]
        coef = expr.coefficient_of(v)
        if coef * SymExpr.var(v) == expr:
            text = render(coef)
            if coef == SymExpr.const(1):
                return variable
            if coef == SymExpr.const(-1):
                return f"-{variable}"
            if len(coef.terms) > 1:
                text = f"({text})"
            return f"{text}*{variable}"
    return render(expr)


def join_terms(texts: Iterable[str]) -> str:
    """Sum of term strings, writing ``a - b`` rather than ``a + -b``."""
    out = ""
    for text in texts:
        if not out:
            out = text
        elif text.startswith("-"):
            out += f" - {text[1:]}"
        else:
            out += f" + {text}"
    return out


@dataclass
class EquationSet:
    which: str
    variable: str | None
    terms: dict[str, list[EquationTerm]]
    notes: list[str] = field(default_factory=list)
    missing_constants: list[str] = field(default_factory=list)

    def counterterms(self, component: str) -> list[EquationTerm]:
        return [t for t in self.terms[component] if t.kind in ("counterterm", "transport")]

    def to_json(self) -> dict:
        return {
            "which": self.which,
            "variable": self.variable,
            "components": {c: [t.to_json(self.variable) for t in ts] for c, ts in self.terms.items()},
            "pretty": {c: join_terms(t.display(self.variable) for t in ts) for c, ts in self.terms.items()},
            "notes": self.notes,
            "missing_constants": self.missing_constants,
        }


def _noises_of(problem: Problem, t: str) -> list[str]:
    return [xi for xi in problem.table.noise_types if not problem.nonlinearity.F(t, xi).is_zero()]


def _counterterm_entries(problem: Problem, family: TreeFamily, constants: RenormConstants):
    """Yield ``(component, tree, resolved constant, S, Upsilon)`` for the non-zero counterterms."""
    for t in problem.table.base_kernel_types:
        entries = []
        for tree in family.trees(t):
            const = constants.resolve(tree)
            if not const.is_zero:
                entries.append((const.text(), tree.code, tree, const))
        for _, _, tree, const in sorted(entries, key=lambda e: (e[0], e[1])):
            yield t, tree, const, symmetry_factor(tree), upsilon(tree, problem.nonlinearity, t)


def _constants(problem: Problem, constants: RenormConstants | None) -> RenormConstants:
    return constants if constants is not None else RenormConstants(dict(problem.constants))


def renormalized_equation(
    problem: Problem,
    constants: RenormConstants | None = None,
    family: TreeFamily | None = None,
) -> EquationSet:
    """``F_t + sum F_t^Xi xi + sum_tau c_tau/S(tau) Upsilon_t[tau]`` per component."""
    constants = _constants(problem, constants)
    family = family or base_family(problem, Fraction(0))
    spec = problem.nonlinearity
    out = EquationSet("renorm", None, {t: [] for t in problem.table.base_kernel_types})
    for t in problem.table.base_kernel_types:
        drift = spec.F(t, DRIFT)
        if drift:
            out.terms[t].append(EquationTerm("drift", t, drift))
        for xi in _noises_of(problem, t):
            out.terms[t].append(EquationTerm("noise", t, spec.F(t, xi), noise=xi))
    for t, tree, const, s, ups in _counterterm_entries(problem, family, constants):
        if const.source == "default":
            out.missing_constants.append(tree.code)
        if not ups:
            continue
        out.terms[t].append(
            EquationTerm("counterterm", t, ups, tree=tree.code, constant=const.text(), constant_source=const.source, symmetry=s)
        )
    known = set().union(*(family.codes(t) for t in problem.table.base_kernel_types))
    unknown = constants.unknown_keys(known)
    if unknown:
        out.notes.append(f"constants given for trees outside the negative non-vanishing family: {unknown}")
    return out


def _frechet(expr: SymExpr, slot: str) -> SymExpr:
    return frechet_derivative(expr, slot)


def tangent_equation(
    problem: Problem,
    constants: RenormConstants | None = None,
    family: TreeFamily | None = None,
) -> EquationSet:
    """Fréchet derivative of the renormalized right-hand side plus the Cameron-Martin source."""
    renorm = renormalized_equation(problem, constants, family)
    out = EquationSet("tangent", TANGENT, {t: [] for t in renorm.terms}, list(renorm.notes), list(renorm.missing_constants))
    spec = problem.nonlinearity
    for t, terms in renorm.terms.items():
        for term in terms:
            d = _frechet(term.expr, TANGENT)
            if term.kind == "counterterm" and transport_direction(term.expr) is not None:
                out.terms[t].append(
                    EquationTerm("transport", t, d, tree=term.tree, constant=term.constant,
                                 constant_source=term.constant_source, symmetry=term.symmetry,
                                 direction=transport_direction(term.expr), sign=1)
                )
                continue
            if d:
                out.terms[t].append(EquationTerm(term.kind, t, d, noise=term.noise, tree=term.tree,
                                                 constant=term.constant, constant_source=term.constant_source,
                                                 symmetry=term.symmetry))
        for xi in _noises_of(problem, t):
            out.terms[t].append(EquationTerm("cameron-martin", t, spec.F(t, xi), noise=xi))
    return out


# ---------------------------------------------------------------------------
# Simplicity assumption and the dual equation
# ---------------------------------------------------------------------------


@dataclass
class SimplicityReport:
    nond: list[str] = field(default_factory=list)
    transport: dict[str, int] = field(default_factory=dict)
    violations: list[str] = field(default_factory=list)
    skipped: list[str] = field(default_factory=list)
    nonlinearity_violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations and not self.nonlinearity_violations

    def to_json(self) -> dict:
        return {
            "ok": self.ok,
            "nond": self.nond,
            "transport": self.transport,
            "violations": self.violations,
            "skipped_zero_constant": self.skipped,
            "nonlinearity_violations": self.nonlinearity_violations,
        }


def classify_counterterm(expr: SymExpr) -> str | int:
    """``"nond"``, a transport direction ``i``, or ``"violation"``."""
    if all(v.slot == "u" and is_zero(v.deriv) for v in expr.variables()):
        return "nond"
    i = transport_direction(expr)
    return i if i is not None else "violation"


def check_assumption_simplicity(
    problem: Problem,
    family: TreeFamily | None = None,
    constants: RenormConstants | None = None,
) -> SimplicityReport:
    """Partition the negative family by the shape of its counterterms.

    Only trees whose constant is not known to vanish are classified; the
    others are listed as skipped.
    """
    constants = _constants(problem, constants)
    family = family or base_family(problem, Fraction(0))
    report = SimplicityReport()
    for (t, xi), expr in sorted(problem.nonlinearity.entries.items(), key=lambda kv: (kv[0][0], kv[0][1] or "")):
        if any(not is_zero(v.deriv) for v in expr.variables()):
            report.nonlinearity_violations.append(f"{t}/{xi or 'drift'}")
    for t in problem.table.base_kernel_types:
        for tree in family.trees(t):
            if constants.resolve(tree).is_zero:
                report.skipped.append(tree.code)
                continue
            kind = classify_counterterm(upsilon(tree, problem.nonlinearity, t))
            if kind == "nond":
                report.nond.append(tree.code)
            elif kind == "violation":
                report.violations.append(tree.code)
            else:
                report.transport[tree.code] = kind
    return report


class SimplicityViolation(SpecViolation):
    def __init__(self, report: SimplicityReport):
        names = report.violations + report.nonlinearity_violations
        super().__init__(f"dual equation needs counterterms depending on u only or equal to d_i u; violating: {names}")
        self.report = report


def dual_equation(
    problem: Problem,
    constants: RenormConstants | None = None,
    family: TreeFamily | None = None,
) -> EquationSet:
    """Backward equation ``-d_t w = L*w + DF w + sum DF^Xi w xi + phi + counterterms``."""
    constants = _constants(problem, constants)
    family = family or base_family(problem, Fraction(0))
    report = check_assumption_simplicity(problem, family, constants)
    if not report.ok:
        raise SimplicityViolation(report)
    renorm = renormalized_equation(problem, constants, family)
    out = EquationSet("dual", DUAL, {t: [] for t in renorm.terms}, list(renorm.notes), list(renorm.missing_constants))
    if not problem.nonlinearity.single_equation:
        out.notes.append("multi-component system: counterterm identification is unverified; dual equation emitted as is")
    for t, terms in renorm.terms.items():
        out.terms[t].append(EquationTerm("operator", t))
        for term in terms:
            d = _frechet(term.expr, DUAL)
            if term.kind == "counterterm" and term.tree in report.transport:
                out.terms[t].append(
                    EquationTerm("transport", t, -d, tree=term.tree, constant=term.constant,
                                 constant_source=term.constant_source, symmetry=term.symmetry,
                                 direction=report.transport[term.tree], sign=-1)
                )
                continue
            if not d:
                continue
            if d.slot_degree(DUAL) != {1}:
                raise AssertionError(f"dual term {render(d)} is not linear in w")
            out.terms[t].append(EquationTerm(term.kind, t, d, noise=term.noise, tree=term.tree,
                                             constant=term.constant, constant_source=term.constant_source,
                                             symmetry=term.symmetry))
        out.terms[t].append(EquationTerm("source", t))
    return out


# ---------------------------------------------------------------------------
# Single-equation identities
# ---------------------------------------------------------------------------


def _require_single(problem: Problem) -> str:
    spec = problem.nonlinearity
    if not spec.single_equation:
        raise PreconditionError("identity is stated for a single equation")
    if not spec.simplicity_mode():
        raise PreconditionError("identity needs nonlinearities depending on the solution only")
    return problem.target


@dataclass
class IdentityResult:
    tree: str
    ok: bool
    residual: str
    lhs: str = ""
    rhs: str = ""

    def to_json(self) -> dict:
        return {"tree": self.tree, "ok": self.ok, "residual": self.residual, "lhs": self.lhs, "rhs": self.rhs}


def dupsilon_sides(tree: DecoratedTree, problem: Problem) -> tuple[SymExpr, SymExpr]:
    t = _require_single(problem)
    spec = problem.nonlinearity
    lhs = frechet_derivative(upsilon(tree, spec, t), DUAL)
    rhs = SymExpr()
    for mu in tree.nodes():
        rhs = rhs + upsilon_dual(dualize_at(tree, mu), spec, dual_type(t))
    return lhs, rhs


def verify_dupsilon_identity(tree: DecoratedTree, problem: Problem) -> IdentityResult:
    """``D Upsilon_t[tau] w = sum_mu Upsilon_t~[FD_mu tau]`` as an exact identity."""
    lhs, rhs = dupsilon_sides(tree, problem)
    residual = lhs - rhs
    return IdentityResult(tree.code, residual.is_zero(), render(residual), render(lhs), render(rhs))


@dataclass
class SymmetryLemmaResult:
    ok: bool
    lhs: dict[str, Fraction]
    rhs: dict[str, Fraction]
    per_tree_ok: bool
    rederived_ok: bool
    outside: list[str]
    failures: list[str]
    base_size: int
    dual_size: int
    residuals: dict[str, Fraction] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "ok": self.ok,
            "residuals": {c: str(r) for c, r in self.residuals.items()},
            "per_tree_identity_ok": self.per_tree_ok,
            "rederived_from_per_tree_ok": self.rederived_ok,
            "base_family_size": self.base_size,
            "dual_family_size": self.dual_size,
            "images_outside_dual_family": self.outside,
            "failures": self.failures,
        }


def verify_symmetry_lemma(
    problem: Problem,
    cutoff: Fraction = Fraction(0),
    symmetry: Callable[[DecoratedTree], int] = symmetry_factor,
    base: TreeFamily | None = None,
    dual: TreeFamily | None = None,
) -> SymmetryLemmaResult:
    """Compare ``sum_tau sum_u e(FD_u tau)/S(tau)`` with ``sum_sigma e(sigma)/S(sigma)``.

    Both families are closed at ``cutoff`` (``|tau| <= cutoff``); ``f`` is the
    canonical basis vector of each dual tree, so the comparison is coefficientwise.
    ``symmetry`` is injectable so that a corrupted factor can be shown to fail.
    """
    t = _require_single(problem)
    tbar = dual_type(t)
    base = base or base_family(problem, cutoff, closed=True)
    dual = dual or dual_family(problem, cutoff, closed=True)
    dual_codes = dual.codes(tbar)
    lhs: dict[str, Fraction] = {}
    outside = set()
    for tau in base.trees(t):
        w = Fraction(1, symmetry(tau))
        for u in tau.nodes():
            sigma = dualize_at(tau, u)
            if sigma.code in dual_codes:
                lhs[sigma.code] = lhs.get(sigma.code, 0) + w
            else:
                outside.add(sigma.code)
    rhs = {s.code: Fraction(1, symmetry(s)) for s in dual.trees(tbar)}
    failures = [c for c in sorted(set(lhs) | set(rhs)) if lhs.get(c, 0) != rhs.get(c, 0)]

    base_codes = base.codes(t)
    per_tree_fail = []
    rederived: dict[str, Fraction] = {}
    for s in dual.trees(tbar):
        q = q_project(s)
        m = multiplicity_m(s)
        if m * symmetry(s) != symmetry(q) or q.code not in base_codes:
            per_tree_fail.append(s.code)
        rederived[s.code] = Fraction(m, symmetry(q))
    rederived_ok = all(rederived.get(c, 0) == lhs.get(c, 0) for c in set(rederived) | set(lhs))
    return SymmetryLemmaResult(
        ok=not failures,
        lhs=lhs,
        rhs=rhs,
        per_tree_ok=not per_tree_fail,
        rederived_ok=rederived_ok,
        outside=sorted(outside),
        failures=failures + [f"m*S != S(q) for {c}" for c in per_tree_fail],
        base_size=len(base_codes),
        dual_size=len(dual_codes),
        residuals={c: lhs.get(c, Fraction(0)) - rhs.get(c, Fraction(0)) for c in failures},
    )


@dataclass
class PhiReport:
    checked: int
    skipped: list[str]
    involution: list[str]
    symmetry: list[str]
    upsilon: list[str]
    in_family: list[str]

    @property
    def ok(self) -> bool:
        return not (self.involution or self.symmetry or self.upsilon or self.in_family)

    def to_json(self) -> dict:
        return {
            "ok": self.ok,
            "checked": self.checked,
            "skipped_decorated": self.skipped,
            "involution_failures": self.involution,
            "symmetry_failures": self.symmetry,
            "upsilon_failures": self.upsilon,
            "outside_family": self.in_family,
        }


def _decorated(tree: DecoratedTree) -> bool:
    return any(any(k) for k in tree.node_dec)


def verify_phi_properties(problem: Problem, dual: TreeFamily | None = None) -> PhiReport:
    """Involution of the root shift, invariance of ``S`` and of the dual counterterm."""
    t = _require_single(problem)
    tbar = dual_type(t)
    dual = dual or dual_family(problem, Fraction(0), closed=True)
    codes = dual.codes(tbar)
    rep = PhiReport(0, [], [], [], [], [])
    for sigma in dual.trees(tbar):
        if _decorated(sigma):
            rep.skipped.append(sigma.code)
            continue
        rep.checked += 1
        once = list(reroot_hat(sigma))
        if len(once) != 1 or once[0][1] != 1:
            rep.involution.append(sigma.code)
            continue
        phi = once[0][0]
        twice = list(reroot_hat(phi))
        if len(twice) != 1 or twice[0][1] != 1 or twice[0][0].code != sigma.code:
            rep.involution.append(sigma.code)
        if phi.code != reroot_plain(sigma).code:
            rep.involution.append(sigma.code)
        if phi.code not in codes:
            rep.in_family.append(sigma.code)
        if symmetry_factor(phi) != symmetry_factor(sigma):
            rep.symmetry.append(sigma.code)
        spec = problem.nonlinearity
        if upsilon_dual(phi, spec, tbar) != upsilon_dual(sigma, spec, tbar):
            rep.upsilon.append(sigma.code)
    return rep


# ---------------------------------------------------------------------------
# Characterization of the dual family
# ---------------------------------------------------------------------------


def homogeneity_margin(problem: Problem) -> Fraction:
    """Homogeneity of the lightest branch ``J_l[tau']`` with ``tau'`` non-vanishing, maximised over ``l``.

    Every dual tree below the cutoff is the cut image of a base tree that
    carries such a lightest branch, so enumerating the base family up to
    ``cutoff + margin`` reaches all preimages that are needed.
    """
    fam = base_family(problem, Fraction(0))
    margin = Fraction(0)
    for l in problem.table.base_kernel_types:
        homs = [m.hom for m in fam.by_type.get(l, {}).values()]
        lowest = min(homs) if homs else Fraction(0)
        margin = max(margin, problem.table.hom[l] + lowest)
    return margin


@dataclass
class CharacterizationResult:
    ok: bool
    generated: set[str]
    enumerated: set[str]
    base_cutoff: Fraction

    @property
    def only_generated(self) -> list[str]:
        return sorted(self.generated - self.enumerated)

    @property
    def only_enumerated(self) -> list[str]:
        return sorted(self.enumerated - self.generated)

    def to_json(self) -> dict:
        return {
            "ok": self.ok,
            "generated": len(self.generated),
            "enumerated": len(self.enumerated),
            "only_generated": self.only_generated,
            "only_enumerated": self.only_enumerated,
            "base_cutoff": str(self.base_cutoff),
        }


def characterize_dual_family(problem: Problem, cutoff: Fraction | None = None) -> CharacterizationResult:
    """``{FD_{u,e} tau}`` versus the enumerated non-vanishing dual family below ``cutoff``.

    Cutting a branch raises the homogeneity by at most the margin, so the base
    family is enumerated at ``cutoff + margin`` to capture every cut image
    below ``cutoff``.
    """
    t = _require_single(problem)
    tbar = dual_type(t)
    cutoff = Fraction(0) if cutoff is None else Fraction(cutoff)
    margin = max(homogeneity_margin(problem), Fraction(0))
    base_cut = cutoff + margin
    base = base_family(problem, base_cut)
    table = dual_rule(problem).table
    generated = set()
    for tau in base.trees(t):
        for e in tau.kernel_edges():
            sigma = dualize_cut(tau, tau.parent[e], e)
            if homogeneity(sigma, table, problem.scaling) < cutoff:
                generated.add(sigma.code)
    enumerated = dual_family(problem, cutoff).codes(tbar)
    return CharacterizationResult(generated == enumerated, generated, enumerated, base_cut)


def distinguished_roundtrip(dual: TreeFamily, target: str) -> list[str]:
    """Dual trees for which ``FD_nu(q sigma) != sigma`` with ``nu`` the distinguished node."""
    bad = []
    for sigma in dual.trees(target):
        nu = distinguished_node(sigma)
        if dualize_at(q_project(sigma), nu).code != sigma.code:
            bad.append(sigma.code)
    return bad


def unit_tree(problem: Problem) -> DecoratedTree:
    return unit(problem.dim)
