from __future__ import annotations

from fractions import Fraction

import pytest
import sympy

from rsdual.core import dual_type, noise, plant, product, symmetry_factor, with_root_dec
from rsdual.equations import (
    PreconditionError,
    RenormConstants,
    SimplicityViolation,
    base_family,
    characterize_dual_family,
    check_assumption_simplicity,
    classify_counterterm,
    distinguished_roundtrip,
    dual_equation,
    dual_family,
    dupsilon_sides,
    homogeneity_margin,
    renormalized_equation,
    tangent_equation,
    vanishes_by_symmetry,
    verify_dupsilon_identity,
    verify_phi_properties,
    verify_symmetry_lemma,
)
from rsdual.symbolic import SymExpr, VarId, evaluate, instantiate, parse_expr, render
from rsdual.verify import corrupted_symmetry

from conftest import problem_with

Z = (0, 0)
XI = noise("Xi", 2)
I_XI = plant("t", Z, XI)
I_XI_XI = product(I_XI, XI)

SHE_RENORM = (
    "f(u) + g(u)*Xi + C1*g'(u)g(u) + C2*g'(u)^3g(u) + C3/2*g''(u)g'(u)g(u)^2 + C3*g''(u)g'(u)g(u)^2"
)
PHI4_ROOT_DECORATED = sorted(
    f"X{k}{{t^(0,0,0,0)->0(){{Xi^(0,0,0,0)->0(){{}}}},t^(0,0,0,0)->0(){{Xi^(0,0,0,0)->0(){{}}}}}}".replace(" ", "")
    for k in ("(0,0,0,1)", "(0,0,1,0)", "(0,1,0,0)")
)


def transport_problem():
    """Linear multiplicative noise with a constant on the tree ``X_1 Xi``, whose counterterm is ``d_1 u``."""

    def edit(doc):
        doc["nonlinearity"]["components"]["t"]["Xi"] = ["u", "t", [0, 0]]
        doc["constants"] = {with_root_dec(XI, (0, 1)).code: "C"}

    return problem_with("additive_she", edit)


class TestConstants:
    def test_odd_noise_count_vanishes(self):
        assert vanishes_by_symmetry(XI) == "odd number of Xi leaves"

    def test_odd_spatial_degree_vanishes(self):
        assert vanishes_by_symmetry(with_root_dec(I_XI_XI, (0, 1))) == "odd total spatial degree"

    def test_even_tree_keeps_symbol(self):
        assert vanishes_by_symmetry(I_XI_XI) is None
        resolved = RenormConstants().resolve(I_XI_XI)
        assert resolved.source == "default" and resolved.text() == f"c[{I_XI_XI.code}]"

    def test_explicit_value_wins(self):
        assert RenormConstants({XI.code: "C0"}).resolve(XI).text() == "C0"


class TestRenormalizedEquation:
    def test_she_counterterms(self, she):
        eq = renormalized_equation(she)
        assert eq.to_json()["pretty"]["t"] == SHE_RENORM
        assert eq.missing_constants == []
        symmetries = sorted(term.symmetry for term in eq.counterterms("t"))
        assert symmetries == [1, 1, 1, 2]

    def test_symmetry_factors_divide(self, she):
        for term in renormalized_equation(she).counterterms("t"):
            tree = next(t for t in base_family(she, Fraction(0)).trees("t") if t.code == term.tree)
            assert term.symmetry == symmetry_factor(tree)

    def test_additive_has_no_counterterms(self, additive):
        eq = renormalized_equation(additive)
        assert eq.to_json()["pretty"]["t"] == "-u + Xi"
        assert eq.counterterms("t") == []

    def test_phi4_keeps_missing_constants_as_symbols(self, phi4):
        eq = renormalized_equation(phi4)
        assert len(eq.missing_constants) == 3
        assert all(term.constant.startswith("c[") for term in eq.counterterms("t"))

    def test_unknown_constant_is_noted(self, she):
        eq = renormalized_equation(she, RenormConstants({"0(){}": "C9"}))
        assert any("outside" in note for note in eq.notes)


class TestTangentEquation:
    def test_she_first_counterterm(self, she):
        pretty = tangent_equation(she).to_json()["pretty"]["t"]
        assert "C1*(g''(u)g(u)+g'(u)^2)*v" in pretty
        assert pretty.endswith("g(u)*h[Xi]")

    def test_termwise_matches_directional_derivative(self, she):
        """Each tangent term is d/de of the renormalized term at u + e v (sympy oracle)."""
        g = parse_expr(["+", ["^", ["u", "t", [0, 0]], 3], ["*", 2, ["u", "t", [0, 0]]], 1], 2)
        f = parse_expr(["*", -1, ["^", ["u", "t", [0, 0]], 2]], 2)
        symbols = {"f": f, "g": g}
        u, v, e = sympy.symbols("u v e")
        uvar, vvar = VarId("t", Z), VarId("t", Z, "v")
        renorm = renormalized_equation(she).terms["t"]
        tangent = {(t.kind, t.tree, t.noise): t for t in tangent_equation(she).terms["t"]}
        for term in renorm:
            shifted = sympy.sympify(evaluate(instantiate(term.expr, symbols), {uvar: u + e * v}))
            expected = sympy.diff(shifted, e).subs(e, 0)
            got = tangent[(term.kind, term.tree, term.noise)]
            value = sympy.sympify(evaluate(instantiate(got.expr, symbols), {uvar: u, vvar: v}))
            assert sympy.expand(expected - value) == 0

    def test_additive(self, additive):
        assert tangent_equation(additive).to_json()["pretty"]["t"] == "-v + h[Xi]"

    def test_transport_keeps_sign(self):
        pretty = tangent_equation(transport_problem()).to_json()["pretty"]["t"]
        assert "C*d_1 v" in pretty and "- C*d_1 v" not in pretty


class TestDualEquation:
    def test_she(self, she):
        pretty = dual_equation(she).to_json()["pretty"]["t"]
        assert pretty.startswith("L*w + f'(u)*w + g'(u)*w*Xi + C1*(g''(u)g(u)+g'(u)^2)*w")
        assert pretty.endswith(" + phi")

    def test_additive(self, additive):
        assert dual_equation(additive).to_json()["pretty"]["t"] == "L*w - w + phi"

    def test_transport_flips_sign(self):
        problem = transport_problem()
        report = check_assumption_simplicity(problem)
        assert report.transport == {with_root_dec(XI, (0, 1)).code: 1}
        assert "- C*d_1 w" in dual_equation(problem).to_json()["pretty"]["t"]

    def test_derivative_nonlinearity_is_rejected(self, kpz):
        with pytest.raises(SimplicityViolation) as info:
            dual_equation(kpz)
        report = info.value.report
        assert report.violations == [XI.code]
        assert report.nonlinearity_violations == ["t/Xi"]

    def test_classification(self):
        u = SymExpr.var(VarId("t", Z))
        du = SymExpr.var(VarId("t", (0, 1)))
        assert classify_counterterm(u * u) == "nond"
        assert classify_counterterm(du) == 1
        assert classify_counterterm(u * du) == "violation"


class TestIdentities:
    def test_dupsilon_on_she_family(self, she):
        trees = list(base_family(she, Fraction(0)).trees("t"))
        assert len(trees) >= 5
        for tree in trees:
            assert verify_dupsilon_identity(tree, she).ok

    def test_dupsilon_example(self, she):
        lhs, rhs = dupsilon_sides(I_XI_XI, she)
        assert lhs == rhs
        assert render(lhs) in ("g''(u)g(u)w+g'(u)^2w", "g'(u)^2w+g''(u)g(u)w")

    @pytest.mark.parametrize("name", ["she", "additive", "phi4"])
    def test_symmetry_lemma(self, name, request):
        result = verify_symmetry_lemma(request.getfixturevalue(name))
        assert result.ok and result.per_tree_ok and result.rederived_ok

    def test_vanishing_images_stay_outside(self, she, additive):
        assert verify_symmetry_lemma(she).outside == []
        # with constant noise coefficient the dual factor D(1) vanishes
        assert verify_symmetry_lemma(additive).outside == [XI.code]

    def test_corrupted_symmetry_factor_is_detected(self, she):
        victim = max(dual_family(she, Fraction(0), closed=True).trees("t~"), key=lambda s: (s.n_edges, s.code))
        result = verify_symmetry_lemma(she, symmetry=corrupted_symmetry(victim.code))
        assert not result.ok
        assert result.failures[0] == victim.code

    def test_phi_properties(self, she):
        report = verify_phi_properties(she)
        assert report.ok and report.checked > 0

    def test_multi_component_identity_is_refused(self, kpz):
        with pytest.raises(PreconditionError):
            verify_dupsilon_identity(XI, kpz)


class TestCharacterization:
    def test_she_families_agree(self, she):
        result = characterize_dual_family(she)
        assert result.ok and len(result.generated) == 26

    def test_phi4_root_decorated_trees_are_not_generated(self, phi4):
        # the root factor of these dual trees is d_i(-6w) while every preimage carries d_i(-6) = 0
        result = characterize_dual_family(phi4)
        assert not result.ok
        assert result.only_generated == []
        assert result.only_enumerated == PHI4_ROOT_DECORATED

    def test_margin(self, she, phi4):
        assert homogeneity_margin(she) == Fraction(49, 100)
        assert homogeneity_margin(phi4) == 0

    def test_distinguished_round_trip(self, she):
        assert distinguished_roundtrip(dual_family(she, Fraction(0)), dual_type("t")) == []

    def test_dual_family_size(self, she):
        assert len(dual_family(she, Fraction(0), nonvanishing=False).codes("t~")) == 41
        assert len(dual_family(she, Fraction(0)).codes("t~")) == 26
