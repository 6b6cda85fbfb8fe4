from __future__ import annotations

from collections import Counter
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rsdual.core import Scaling, TypeTable, noise, plant, product, with_root_dec
from rsdual.equations import dual_rule
from rsdual.rules import (
    CapExceeded,
    NotSubcritical,
    Pattern,
    Rule,
    check_normal,
    check_subcritical,
    conforms,
    enumerate_trees,
    extend_rule_noise,
    q_project,
    rule_from_json,
)

from oracles import brute_force_family

Z = (0, 0)
XI = noise("Xi", 2)
I_XI = plant("t", Z, XI)
KAPPA = Fraction(1, 100)


def she_table(reg_t=Fraction(1, 2) - 2 * KAPPA):
    return TypeTable(
        ("t",), ("Xi",),
        {"t": Fraction(2), "Xi": Fraction(-3, 2) - KAPPA},
        {"t": reg_t, "Xi": Fraction(-3, 2) - KAPPA},
    )


SHE_RULE_JSON = {"t": [[["t", [0, 0], "*"]], [["Xi", [0, 0]], ["t", [0, 0], "*"]]]}


def she_rule(table=None):
    return rule_from_json(SHE_RULE_JSON, table or she_table(), 2)


def as_counter(multiset) -> Counter:
    return Counter({(a, k): m for a, k, m in multiset})


class TestNormality:
    def test_she_rule_is_normal(self, she):
        assert check_normal(she.rule) == []

    def test_missing_sub_multiset_is_named(self):
        rule = rule_from_json({"t": [[], [["t", [0, 0]], ["t", [0, 0]]]]}, she_table(), 2)
        problems = check_normal(rule)
        assert len(problems) == 1
        assert "[(t,0,0)]" in problems[0]

    def test_empty_rule_lacks_empty_entry(self):
        rule = rule_from_json({}, she_table(), 2)
        assert check_normal(rule) == ["R(t) does not admit the empty multiset"]


class TestSubcriticality:
    def test_she_rule_has_positive_gap(self, she):
        report = check_subcritical(she.rule, she.scaling)
        assert report.ok
        # hom(t) - reg(t) + reg(Xi) = 2 - (1/2 - 1/50) + (-3/2 - 1/100) = 1/100
        assert report.gap == Fraction(1, 100)

    def test_noise_products_violate(self):
        table = TypeTable(("t",), ("Xi",), {"t": Fraction(2), "Xi": Fraction(-5, 2)}, {"t": Fraction(1, 2), "Xi": Fraction(-5, 2)})
        rule = rule_from_json({"t": [[], [["Xi", [0, 0]]], [["t", [0, 0]]], [["t", [0, 0]], ["t", [0, 0]]],
                                     [["t", [0, 0]], ["Xi", [0, 0]]]]}, table, 2)
        report = check_subcritical(rule, Scaling((2, 1)))
        assert not report.ok and report.witness[0] == "t"
        with pytest.raises(NotSubcritical):
            enumerate_trees(rule, Scaling((2, 1)), 0)

    def test_missing_reg_is_a_witness(self):
        table = TypeTable(("t",), ("Xi",), {"t": Fraction(2), "Xi": Fraction(-1)}, {"Xi": Fraction(-1)})
        report = check_subcritical(rule_from_json({"t": [[]]}, table, 2), Scaling((2, 1)))
        assert report.witness == ("t", "reg undefined")

    @given(st.lists(st.sampled_from(["t", "Xi"]), max_size=3))
    @settings(max_examples=30, deadline=None)
    def test_gap_does_not_increase_when_entries_are_added(self, extra):
        rule = she_rule()
        base = check_subcritical(rule, Scaling((2, 1)))
        items = [(a, Z) for a in extra]
        bigger = Rule(rule.table, {"t": rule.entries["t"] + (Pattern(tuple((a, k, 1) for a, k in items)),)}, 2)
        report = check_subcritical(bigger, Scaling((2, 1)))
        assert not report.ok or report.gap <= base.gap


class TestConformity:
    def test_planted_noise_times_noise(self, she):
        assert conforms(product(I_XI, XI), she.rule, "t")

    def test_noise_with_child_edge(self, she):
        from rsdual.core import DecoratedTree

        bad = DecoratedTree((None, 0, 1), (None, "t", "Xi"), (None, Z, Z), (Z, Z, Z), (False, False, True))
        assert conforms(bad, she.rule, "t")
        retyped = bad.replace(edge_type=(None, "Xi", "Xi"), noise_leaf=(False, False, True))
        assert not conforms(retyped, she.rule, "t")

    def test_derivative_on_noise_edge(self, she):
        from rsdual.core import Nested, from_nested

        tree = from_nested(Nested(Z, (("t", (0, 1), XI.to_nested()),)))
        assert not conforms(tree, she.rule, "t")


class TestEnumeration:
    def test_she_negative_family(self, she):
        fam = enumerate_trees(she.rule, she.scaling, 0, targets=["t"])
        codes = fam.codes("t")
        assert len(codes) == 11
        assert XI.code in codes and product(I_XI, XI).code in codes
        assert fam.by_type["t"][product(I_XI, XI).code].hom == Fraction(-51, 50)

    @pytest.mark.parametrize("name", ["she", "phi4"])
    def test_agrees_with_brute_force(self, name, request):
        problem = request.getfixturevalue(name)
        fam = enumerate_trees(problem.rule, problem.scaling, 0, node_cap=20)
        staged = {t.code for t in fam.trees(problem.target) if t.n_edges <= 6}
        assert staged == brute_force_family(problem.rule, problem.scaling, problem.target, Fraction(0), 6)

    def test_cutoff_at_noise_homogeneity_is_empty(self, she):
        fam = enumerate_trees(she.rule, she.scaling, Fraction(-151, 100))
        assert fam.codes("t") == set()

    @given(st.fractions(min_value=-2, max_value=1, max_denominator=20), st.fractions(min_value=0, max_value=1, max_denominator=20))
    @settings(max_examples=15, deadline=None)
    def test_monotone_in_cutoff(self, she, low, step):
        small = enumerate_trees(she.rule, she.scaling, low).codes("t")
        large = enumerate_trees(she.rule, she.scaling, low + step).codes("t")
        assert small <= large

    def test_node_cap_is_reported(self, she):
        with pytest.raises(CapExceeded):
            enumerate_trees(she.rule, she.scaling, 4, node_cap=1)

    def test_decorations_appear_in_phi4_family(self, phi4):
        fam = enumerate_trees(phi4.rule, phi4.scaling, 0)
        decorated = with_root_dec(noise("Xi", 4), (0, 0, 0, 1))
        assert decorated.code in fam.codes("t")


class TestNoiseExtension:
    def test_hatted_entry_appears(self):
        ext = extend_rule_noise(she_rule(), ["1"])
        assert ext.allows("t", Counter({("Xi[1]", Z): 1, ("t", Z): 1}))
        assert ext.allows("t", Counter({("Xi", Z): 1, ("t", Z): 1}))
        assert not ext.allows("t", Counter({("Xi", Z): 1, ("Xi[1]", Z): 1}))

    def test_projection_round_trip(self):
        rule = she_rule()
        ext = extend_rule_noise(rule, ["1", "2"])
        for multiset in ext.expand("t", 2):
            assert rule.allows("t", as_counter(q_project(multiset)))

    def test_single_noise_entry_doubles(self):
        rule = rule_from_json({"t": [[], [["Xi", [0, 0]]]]}, she_table(), 2)
        ext = extend_rule_noise(rule, ["1"])
        assert len(ext.patterns("t")) == 3

    def test_extension_stays_normal_and_subcritical(self):
        ext = extend_rule_noise(she_rule(), ["1"])
        assert check_normal(ext) == []
        assert check_subcritical(ext, Scaling((2, 1))).ok


class TestDualExtension:
    def test_phi4_dual_entry_loses_the_cubic_multiset(self, phi4):
        rule = dual_rule(phi4)
        cubic = Counter({("t", (0, 0, 0, 0)): 3})
        assert rule.allows("t", cubic)
        assert not rule.allows("t~", cubic)

    def test_she_entries_coincide(self, she):
        rule = dual_rule(she)
        assert rule.expand("t", 3) == rule.expand("t~", 3)

    @pytest.mark.parametrize("name", ["she", "phi4"])
    def test_witness_property(self, name, request):
        problem = request.getfixturevalue(name)
        rule = dual_rule(problem)
        kernels = [(t, k) for p in problem.rule.patterns("t") for t, k in p.items() if problem.table.is_kernel(t)]
        for multiset in rule.expand("t~", 2):
            counter = as_counter(multiset)
            assert any(rule.allows("t", counter + Counter([item])) for item in kernels)

    @pytest.mark.parametrize("name", ["she", "phi4"])
    def test_dual_rule_is_subcritical_and_brute_force_agrees(self, name, request):
        problem = request.getfixturevalue(name)
        rule = dual_rule(problem)
        assert check_subcritical(rule, problem.scaling).ok
        fam = enumerate_trees(rule, problem.scaling, 0, node_cap=20, targets=["t~"])
        staged = {t.code for t in fam.trees("t~") if t.n_edges <= 6}
        assert staged == brute_force_family(rule, problem.scaling, "t~", Fraction(0), 6)

    def test_derivative_kernel_dual_rule_is_not_subcritical(self, kpz):
        report = check_subcritical(dual_rule(kpz), kpz.scaling)
        assert not report.ok


class TestProjection:
    def test_hat_and_dual_are_removed(self):
        assert q_project("Xi[1]") == "Xi"
        tree = plant("t~", Z, noise("Xi[1]", 2))
        assert q_project(tree).code == I_XI.code

    def test_projection_keeps_homogeneity(self, she):
        rule = dual_rule(she)
        fam = enumerate_trees(rule, she.scaling, 0, targets=["t~"])
        from rsdual.core import homogeneity

        for sigma in fam.trees("t~"):
            assert homogeneity(q_project(sigma), she.table, she.scaling) == homogeneity(sigma, rule.table, she.scaling)
