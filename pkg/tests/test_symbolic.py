from __future__ import annotations

from fractions import Fraction

import pytest
import sympy
from hypothesis import given, settings
from hypothesis import strategies as st

from rsdual.core import noise, plant, product, with_root_dec
from rsdual.extensions import dualize_at
from rsdual.symbolic import (
    Atom,
    SymExpr,
    VarId,
    evaluate,
    expr_from_json,
    frechet_derivative,
    instantiate,
    is_nonvanishing,
    parse_expr,
    partial,
    render,
    space_derivative,
    to_json,
    transport_direction,
    upsilon,
    upsilon_dual,
)

Z = (0, 0)
XI = noise("Xi", 2)
I_XI = plant("t", Z, XI)
I_XI_XI = product(I_XI, XI)
U = VarId("t", Z)
DU = VarId("t", (0, 1))
DDU = VarId("t", (0, 2))

# sympy oracle: u is a function of x, derivative variables are its x-derivatives
x = sympy.Symbol("x")
u_fun = sympy.Function("u")(x)
SYMPY_VARS = {U: u_fun, DU: u_fun.diff(x), DDU: u_fun.diff(x, 2)}
PLAIN_VARS = dict(zip((U, DU, DDU), sympy.symbols("a b c")))


def sympy_atom(a: Atom, variables=SYMPY_VARS):
    args = [variables[v] for v in a.args]
    dummies = sympy.symbols(f"s0:{len(args)}")
    f = sympy.Function(a.symbol)(*dummies)
    for d, n in zip(dummies, a.alpha):
        if n:
            f = f.diff(d, n)
    return f.subs(dict(zip(dummies, args)), simultaneous=True)


def to_sympy(expr: SymExpr, variables=SYMPY_VARS):
    return sympy.sympify(evaluate(expr, variables, lambda a: sympy_atom(a, variables)))


VAR_LEAVES = [["u", "t", [0, 0]], ["u", "t", [0, 1]]]
SYMBOL_LEAVES = [
    {"symbol": "g", "arg": ["u", "t", [0, 0]]},
    {"symbol": "h", "args": [["u", "t", [0, 0]], ["u", "t", [0, 1]]]},
]


def expressions(with_symbols: bool = True):
    leaves = [st.integers(-3, 3), st.sampled_from(VAR_LEAVES)]
    if with_symbols:
        leaves.append(st.sampled_from(SYMBOL_LEAVES))
    leaf = st.one_of(*leaves)

    def extend(sub):
        return st.one_of(
            st.lists(sub, min_size=2, max_size=3).map(lambda xs: ["+", *xs]),
            st.lists(sub, min_size=2, max_size=3).map(lambda xs: ["*", *xs]),
            st.tuples(sub, sub).map(lambda p: ["-", *p]),
            st.tuples(sub, st.integers(0, 3)).map(lambda p: ["^", p[0], p[1]]),
        )

    return st.recursive(leaf, extend, max_leaves=8).map(lambda node: parse_expr(node, 2))


class TestCalculus:
    @given(expressions(), st.sampled_from([U, DU]))
    @settings(max_examples=150, deadline=None)
    def test_partial_matches_sympy(self, expr, v):
        lhs = sympy.diff(to_sympy(expr, PLAIN_VARS), PLAIN_VARS[v])
        rhs = to_sympy(partial(expr, v), PLAIN_VARS)
        assert sympy.simplify(sympy.expand(lhs - rhs).doit()) == 0

    @given(expressions())
    @settings(max_examples=100, deadline=None)
    def test_space_derivative_is_the_chain_rule(self, expr):
        lhs = sympy.diff(to_sympy(expr), x)
        rhs = to_sympy(space_derivative(expr, 1))
        assert sympy.simplify(sympy.expand(lhs - rhs).doit()) == 0

    @given(expressions(with_symbols=False), expressions(with_symbols=False))
    @settings(max_examples=100, deadline=None)
    def test_polynomial_arithmetic_is_exact(self, a, b):
        point = {U: Fraction(2, 3), DU: Fraction(-5, 7)}
        assert evaluate(a * b, point) == evaluate(a, point) * evaluate(b, point)
        assert evaluate(a - b, point) == evaluate(a, point) - evaluate(b, point)

    def test_frechet_derivative_of_counterterm(self, she):
        d = frechet_derivative(upsilon(I_XI_XI, she.nonlinearity, "t"))
        assert render(d) in ("g''(u)g(u)w+g'(u)^2w", "g'(u)^2w+g''(u)g(u)w")

    def test_frechet_refuses_dual_slot(self):
        with pytest.raises(ValueError):
            frechet_derivative(SymExpr.var(U.in_slot("w")))

    @given(expressions())
    @settings(max_examples=100, deadline=None)
    def test_json_round_trip(self, expr):
        assert expr_from_json(to_json(expr)) == expr

    def test_instantiate_symbol(self, she):
        g = parse_expr(["^", ["u", "t", [0, 0]], 2], 2)
        out = instantiate(upsilon(I_XI_XI, she.nonlinearity, "t"), {"g": g})
        assert out == 2 * SymExpr.var(U) ** 3


class TestCounterterms:
    def test_she_examples(self, she):
        spec = she.nonlinearity
        assert render(upsilon(XI, spec, "t")) == "g(u)"
        assert render(upsilon(I_XI_XI, spec, "t")) == "g'(u)g(u)"

    def test_phi4_two_branches(self, phi4):
        tree = product(plant("t", (0, 0, 0, 0), noise("Xi", 4)), plant("t", (0, 0, 0, 0), noise("Xi", 4)))
        assert upsilon(tree, phi4.nonlinearity, "t") == -6 * SymExpr.var(VarId("t", (0, 0, 0, 0)))

    def test_dual_tree(self, she):
        inner = next(u for u in I_XI_XI.nodes() if u != I_XI_XI.root)
        sigma = dualize_at(I_XI_XI, inner)
        assert render(upsilon_dual(sigma, she.nonlinearity, "t~")) == "g'(u)^2w"
        assert upsilon(sigma, she.nonlinearity, "t").is_zero()

    def test_node_decoration_differentiates(self, she):
        out = upsilon(with_root_dec(XI, (0, 1)), she.nonlinearity, "t")
        assert out == SymExpr.atom(Atom("g", (U,), (1,))) * SymExpr.var(DU)


class TestNonVanishing:
    def test_she(self, she):
        assert is_nonvanishing(I_XI_XI, she.nonlinearity, "t")
        assert is_nonvanishing(I_XI, she.nonlinearity, "t")

    def test_phi4_noise_does_not_multiply(self, phi4):
        xi = noise("Xi", 4)
        planted = plant("t", (0, 0, 0, 0), xi)
        assert not is_nonvanishing(product(planted, xi), phi4.nonlinearity, "t")
        assert is_nonvanishing(product(planted, planted, planted), phi4.nonlinearity, "t")
        assert not is_nonvanishing(product(planted, planted, planted, planted), phi4.nonlinearity, "t")

    def test_additive_noise_kills_branches_at_noise_nodes(self, additive):
        assert not is_nonvanishing(I_XI_XI, additive.nonlinearity, "t")


class TestTransport:
    def test_space_derivative_is_transport(self):
        assert transport_direction(SymExpr.var(DU)) == 1

    def test_time_derivative_and_multiples_are_not(self):
        assert transport_direction(SymExpr.var(VarId("t", (1, 0)))) is None
        assert transport_direction(2 * SymExpr.var(DU)) is None
        assert transport_direction(SymExpr.var(DDU)) is None


class TestParsing:
    @pytest.mark.parametrize(
        "node",
        [
            [],
            ["^", ["u", "t", [0, 0]], "2"],
            {"args": [["u", "t", [0, 0]]]},
            ["v", "t", [0, 0]],
            ["u", "t", [0]],
            True,
        ],
    )
    def test_rejects_malformed(self, node):
        with pytest.raises(ValueError):
            parse_expr(node, 2)

    def test_fraction_strings(self):
        assert parse_expr("3/4", 2) == SymExpr.const(Fraction(3, 4))
