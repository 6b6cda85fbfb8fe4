"""Scalar nonlinearities and space-time data given as formula strings."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Mapping

import numpy as np
import sympy

from ..symbolic import Atom, SymExpr, VarId

U = sympy.Symbol("u")
T = sympy.Symbol("t")
X = sympy.Symbol("x")


class FunctionError(ValueError):
    """A formula cannot be parsed or its derivatives are inconsistent."""


def _parse(text: str, allowed: set[sympy.Symbol]) -> sympy.Expr:
    try:
        expr = sympy.sympify(text, locals={"u": U, "t": T, "x": X, "pi": sympy.pi})
    except (sympy.SympifyError, SyntaxError, TypeError) as exc:
        raise FunctionError(f"cannot parse {text!r}") from exc
    extra = expr.free_symbols - allowed
    if extra:
        raise FunctionError(f"{text!r} uses unknown symbols {sorted(map(str, extra))}")
    return expr


def _vectorize(expr: sympy.Expr, args: tuple[sympy.Symbol, ...]) -> Callable[..., np.ndarray]:
    fn = sympy.lambdify(args, expr, modules="numpy")

    def call(*values):
        out = fn(*values)
        shape = np.broadcast(*[np.asarray(v) for v in values]).shape
        return np.broadcast_to(np.asarray(out, dtype=float), shape).astype(float)

    return call


@dataclass
class ScalarFunction:
    """A smooth function of ``u`` with derivatives up to order three."""

    expr: sympy.Expr
    text: str = ""
    _cache: dict[int, Callable] = field(default_factory=dict, repr=False)

    @classmethod
    def parse(cls, text: str) -> "ScalarFunction":
        return cls(_parse(text, {U}), text)

    def derivative_expr(self, n: int) -> sympy.Expr:
        return sympy.diff(self.expr, U, n) if n else self.expr

    def d(self, n: int) -> Callable[[np.ndarray], np.ndarray]:
        if n not in self._cache:
            self._cache[n] = _vectorize(self.derivative_expr(n), (U,))
        return self._cache[n]

    def __call__(self, u: np.ndarray) -> np.ndarray:
        return self.d(0)(u)

    def self_check(self, points=(-1.3, -0.2, 0.4, 1.7), h: float = 1e-4, tol: float = 1e-6) -> None:
        """Compare the symbolic derivatives with central differences."""
        pts = np.asarray(points, dtype=float)
        for n in (1, 2, 3):
            exact = self.d(n)(pts)
            fd = (self.d(n - 1)(pts + h) - self.d(n - 1)(pts - h)) / (2 * h)
            err = np.max(np.abs(exact - fd) / np.maximum(1.0, np.abs(exact)))
            if err > tol:
                raise FunctionError(f"derivative {n} of {self.text or self.expr} inconsistent (error {err:.2e})")


@dataclass
class SpaceTimeFunction:
    """A formula in ``t`` and ``x``."""

    expr: sympy.Expr
    text: str = ""
    _fn: Callable | None = field(default=None, repr=False)

    @classmethod
    def parse(cls, text: str) -> "SpaceTimeFunction":
        return cls(_parse(text, {T, X}), text)

    def __call__(self, t, x) -> np.ndarray:
        if self._fn is None:
            self._fn = _vectorize(self.expr, (T, X))
        return self._fn(t, x)


def sympy_from_symexpr(expr: SymExpr, functions: Mapping[str, sympy.Expr], component: str) -> sympy.Expr:
    """Translate a single-component counterterm in ``u`` into a sympy expression.

    Generic symbols such as ``g`` are replaced by the formulas in ``functions``
    and their derivative orders become ordinary derivatives in ``u``.
    """
    out = sympy.Integer(0)
    for mono, coeff in expr.terms.items():
        term = sympy.Rational(coeff.numerator, coeff.denominator)
        for factor, power in mono:
            if isinstance(factor, VarId):
                if factor.component != component or factor.slot != "u" or any(factor.deriv):
                    raise FunctionError(f"only the solution value can be simulated, got {factor}")
                term *= U**power
            elif isinstance(factor, Atom):
                if factor.symbol not in functions:
                    raise FunctionError(f"no formula for the symbol {factor.symbol!r}")
                if len(factor.args) != 1:
                    raise FunctionError(f"symbol {factor.symbol!r} must depend on u only")
                term *= sympy.diff(functions[factor.symbol], U, factor.alpha[0]) ** power
        out += term
    return out


def constant_value(text: str | Fraction | float, values: Mapping[str, float]) -> float:
    if isinstance(text, (int, float, Fraction)):
        return float(text)
    try:
        return float(Fraction(text))
    except ValueError:
        pass
    if text not in values:
        raise FunctionError(f"no numerical value for the constant {text!r}")
    return float(values[text])
