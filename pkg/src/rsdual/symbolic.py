"""Symbolic calculus for nonlinearities and counterterms.

Expressions are finite sums of rational multiples of monomials.  A monomial is
a product of powers of *factors*, where a factor is either a formal variable
``u_{(l,k)}`` / ``w_{(l,k)}`` (:class:`VarId`) or a derivative of a named
smooth function (:class:`Atom`).  Atoms are treated as algebraically
independent, so structural zero is the same as identical vanishing for the
generic backend.  Expressions without atoms are exact rational polynomials.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Mapping, Union

from .core import (
    DecoratedTree,
    MultiIndex,
    SpecViolation,
    add_mi,
    base_type,
    is_dual,
    is_zero,
)

Number = Union[int, Fraction]


@dataclass(frozen=True, order=True)
class VarId:
    """The formal variable ``u_{(component, deriv)}`` (or ``w_...`` in the dual slot)."""

    component: str
    deriv: MultiIndex
    slot: str = "u"

    def shifted(self, i: int) -> "VarId":
        e = tuple(1 if j == i else 0 for j in range(len(self.deriv)))
        return VarId(self.component, add_mi(self.deriv, e), self.slot)

    def in_slot(self, slot: str) -> "VarId":
        return VarId(self.component, self.deriv, slot)


@dataclass(frozen=True, order=True)
class Atom:
    """``D^alpha f(args)``: smooth symbol ``symbol`` differentiated ``alpha[i]`` times in ``args[i]``."""

    symbol: str
    args: tuple[VarId, ...]
    alpha: tuple[int, ...]

    @property
    def order(self) -> int:
        return sum(self.alpha)

    def bumped(self, v: VarId) -> "Atom | None":
        if v not in self.args:
            return None
        i = self.args.index(v)
        alpha = list(self.alpha)
        alpha[i] += 1
        return Atom(self.symbol, self.args, tuple(alpha))


Factor = Union[VarId, Atom]
Monomial = tuple[tuple[Factor, int], ...]


def _fkey(f: Factor):
    if isinstance(f, VarId):
        return (1, f.slot, f.component, f.deriv)
    return (0, f.symbol, tuple((a.slot, a.component, a.deriv) for a in f.args), f.alpha)


def _mono(factors: Mapping[Factor, int]) -> Monomial:
    return tuple(sorted(((f, p) for f, p in factors.items() if p), key=lambda fp: _fkey(fp[0])))


class SymExpr:
    """Immutable sparse sum ``sum_m c_m * m`` with rational coefficients."""

    __slots__ = ("terms", "_hash")

    def __init__(self, terms: Mapping[Monomial, Number] | None = None):
        clean = {}
        for m, c in (terms or {}).items():
            c = Fraction(c)
            if c:
                clean[m] = c
        self.terms: dict[Monomial, Fraction] = clean
        self._hash = None

    # -- constructors --------------------------------------------------------
    @classmethod
    def const(cls, c: Number) -> "SymExpr":
        return cls({(): c})

    @classmethod
    def var(cls, v: VarId) -> "SymExpr":
        return cls({((v, 1),): 1})

    @classmethod
    def atom(cls, a: Atom) -> "SymExpr":
        return cls({((a, 1),): 1})

    @classmethod
    def symbol(cls, name: str, *args: VarId) -> "SymExpr":
        return cls.atom(Atom(name, tuple(args), (0,) * len(args)))

    # -- arithmetic ------------------------------------------------------------
    @staticmethod
    def _coerce(other) -> "SymExpr":
        if isinstance(other, SymExpr):
            return other
        if isinstance(other, (int, Fraction)):
            return SymExpr.const(other)
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        out = dict(self.terms)
        for m, c in other.terms.items():
            out[m] = out.get(m, 0) + c
        return SymExpr(out)

    __radd__ = __add__

    def __neg__(self) -> "SymExpr":
        return SymExpr({m: -c for m, c in self.terms.items()})

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        out: dict[Monomial, Fraction] = {}
        for m1, c1 in self.terms.items():
            for m2, c2 in other.terms.items():
                factors = dict(m1)
                for f, p in m2:
                    factors[f] = factors.get(f, 0) + p
                m = _mono(factors)
                out[m] = out.get(m, 0) + c1 * c2
        return SymExpr(out)

    __rmul__ = __mul__

    def __pow__(self, n: int) -> "SymExpr":
        if n < 0:
            raise ValueError("negative powers are not supported")
        out = SymExpr.const(1)
        for _ in range(n):
            out = out * self
        return out

    def __eq__(self, other) -> bool:
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return self.terms == other.terms

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash(frozenset(self.terms.items()))
        return self._hash

    def is_zero(self) -> bool:
        return not self.terms

    def __bool__(self) -> bool:
        return bool(self.terms)

    # -- inspection -------------------------------------------------------------
    @property
    def backend(self) -> str:
        return "generic" if self.atoms() else "polynomial"

    def factors(self) -> set[Factor]:
        return {f for m in self.terms for f, _ in m}

    def atoms(self) -> set[Atom]:
        return {f for f in self.factors() if isinstance(f, Atom)}

    def variables(self) -> set[VarId]:
        """Every variable the expression depends on, including atom arguments."""
        out: set[VarId] = set()
        for f in self.factors():
            if isinstance(f, VarId):
                out.add(f)
            else:
                out.update(f.args)
        return out

    def slot_degree(self, slot: str) -> set[int]:
        """Set of total degrees in the variables of ``slot`` over all monomials."""
        degs = set()
        for m in self.terms:
            degs.add(sum(p for f, p in m if isinstance(f, VarId) and f.slot == slot))
        return degs

    def coefficient_of(self, v: VarId) -> "SymExpr":
        """For an expression linear in ``v``, the cofactor of ``v``."""
        out: dict[Monomial, Fraction] = {}
        for m, c in self.terms.items():
            d = dict(m)
            if d.get(v, 0) == 1:
                del d[v]
                out[_mono(d)] = c
        return SymExpr(out)

    def __repr__(self) -> str:
        return f"SymExpr({render(self)!r})"

    def __str__(self) -> str:
        return render(self)


# ---------------------------------------------------------------------------
# Calculus
# ---------------------------------------------------------------------------


def partial(expr: SymExpr, v: VarId) -> SymExpr:
    """Exact partial derivative with respect to the formal variable ``v``."""
    out: dict[Monomial, Fraction] = {}
    for m, c in expr.terms.items():
        for idx, (f, p) in enumerate(m):
            if isinstance(f, VarId):
                if f != v:
                    continue
                factors = dict(m)
                factors[f] = p - 1
                coeff = c * p
            else:
                bumped = f.bumped(v)
                if bumped is None:
                    continue
                factors = dict(m)
                factors[f] = p - 1
                factors[bumped] = factors.get(bumped, 0) + 1
                coeff = c * p
            key = _mono(factors)
            out[key] = out.get(key, 0) + coeff
    return SymExpr(out)


def space_derivative(expr: SymExpr, i: int) -> SymExpr:
    """Total derivative in the space-time direction ``i`` via the chain rule."""
    out = SymExpr()
    for v in sorted(expr.variables()):
        d = partial(expr, v)
        if d:
            out = out + d * SymExpr.var(v.shifted(i))
    return out


def space_derivative_multi(expr: SymExpr, n: MultiIndex) -> SymExpr:
    for i, count in enumerate(n):
        for _ in range(count):
            expr = space_derivative(expr, i)
    return expr


def frechet_derivative(expr: SymExpr, slot: str = "w") -> SymExpr:
    """``DF(u) w = sum_{(l,k)} partial_{u_(l,k)} F * w_(l,k)``."""
    present = {v for v in expr.variables() if v.slot != "u"}
    if present:
        raise ValueError(f"expression already depends on non-solution variables {sorted(present)}")
    out = SymExpr()
    for v in sorted(expr.variables()):
        d = partial(expr, v)
        if d:
            out = out + d * SymExpr.var(v.in_slot(slot))
    return out


def rename_slot(expr: SymExpr, old: str, new: str) -> SymExpr:
    def fix(f: Factor) -> Factor:
        if isinstance(f, VarId):
            return f.in_slot(new) if f.slot == old else f
        return Atom(f.symbol, tuple(a.in_slot(new) if a.slot == old else a for a in f.args), f.alpha)

    out: dict[Monomial, Fraction] = {}
    for m, c in expr.terms.items():
        factors: dict[Factor, int] = {}
        for f, p in m:
            g = fix(f)
            factors[g] = factors.get(g, 0) + p
        key = _mono(factors)
        out[key] = out.get(key, 0) + c
    return SymExpr(out)


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


def instantiate(expr: SymExpr, symbols: Mapping[str, SymExpr]) -> SymExpr:
    """Replace every smooth symbol by a concrete expression in its arguments."""
    cache: dict[Atom, SymExpr] = {}

    def atom_value(a: Atom) -> SymExpr:
        if a not in cache:
            if a.symbol not in symbols:
                raise KeyError(f"no instantiation for symbol {a.symbol!r}")
            val = symbols[a.symbol]
            for arg, count in zip(a.args, a.alpha):
                for _ in range(count):
                    val = partial(val, arg)
            cache[a] = val
        return cache[a]

    out = SymExpr()
    for m, c in expr.terms.items():
        term = SymExpr.const(c)
        for f, p in m:
            base = atom_value(f) if isinstance(f, Atom) else SymExpr.var(f)
            term = term * base**p
        out = out + term
    return out


def evaluate(
    expr: SymExpr,
    variables: Mapping[VarId, object],
    atom_values: Callable[[Atom], object] | None = None,
    exact: bool = True,
):
    """Evaluate with concrete values.

    With ``exact`` the coefficients stay rational (for rational points);
    otherwise they are converted to floats so numpy arrays can be passed.
    """
    total = 0
    for m, c in expr.terms.items():
        term = c if exact else float(c)
        for f, p in m:
            if isinstance(f, VarId):
                val = variables[f]
            else:
                if atom_values is None:
                    raise KeyError(f"no value for atom {f}")
                val = atom_values(f)
            term = term * val**p
        total = total + term
    return total


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------


def _var_name(v: VarId, show_component: bool) -> str:
    base = v.slot + (f"_{v.component}" if show_component else "")
    prefix = "".join(
        (f"d_{i}" if k == 1 else f"d_{i}^{k}") for i, k in enumerate(v.deriv) if k
    )
    return prefix + base


def _atom_name(a: Atom, show_component: bool) -> str:
    args = ",".join(_var_name(x, show_component) for x in a.args)
    if len(a.args) == 1:
        order = a.alpha[0]
        mark = "'" * order if order <= 3 else f"^({order})"
        return f"{a.symbol}{mark}({args})"
    if a.order == 0:
        return f"{a.symbol}({args})"
    parts = "".join(f"D{i}" * k for i, k in enumerate(a.alpha))
    return f"{a.symbol}_{parts}({args})"


def _render_monomial(m: Monomial, show_component: bool) -> str:
    atoms = sorted((fp for fp in m if isinstance(fp[0], Atom)), key=lambda fp: (-fp[0].order, _fkey(fp[0])))
    vars_ = [fp for fp in m if isinstance(fp[0], VarId)]
    vars_.sort(key=lambda fp: (fp[0].slot != "u", _fkey(fp[0])))
    out = []
    for f, p in atoms + vars_:
        name = _atom_name(f, show_component) if isinstance(f, Atom) else _var_name(f, show_component)
        out.append(name if p == 1 else f"{name}^{p}")
    return "".join(out)


def _render_key(m: Monomial):
    orders = sorted((f.order for f, p in m if isinstance(f, Atom) for _ in range(p)), reverse=True)
    vdeg = sum(p for f, p in m if isinstance(f, VarId))
    return (tuple(-o for o in orders), -vdeg, tuple(_fkey(f) for f, _ in m))


def render(expr: SymExpr) -> str:
    """ASCII form such as ``g''(u)g(u)+g'(u)^2``."""
    if expr.is_zero():
        return "0"
    comps = {v.component for v in expr.variables()}
    show = len(comps) > 1
    pieces = []
    for m in sorted(expr.terms, key=_render_key):
        c = expr.terms[m]
        body = _render_monomial(m, show)
        mag = abs(c)
        if not body:
            text = str(mag)
        elif mag == 1:
            text = body
        else:
            text = f"{mag}{body}" if mag.denominator == 1 else f"({mag}){body}"
        sign = "-" if c < 0 else "+"
        pieces.append((sign, text))
    first_sign, first = pieces[0]
    out = ("-" if first_sign == "-" else "") + first
    for sign, text in pieces[1:]:
        out += sign + text
    return out


def to_json(expr: SymExpr) -> list:
    """JSON term list: ``[{"coeff": "p/q", "factors": [...]}]``."""
    out = []
    for m in sorted(expr.terms, key=_render_key):
        factors = []
        for f, p in m:
            if isinstance(f, VarId):
                factors.append({"var": [f.slot, f.component, list(f.deriv)], "pow": p})
            else:
                factors.append(
                    {
                        "symbol": f.symbol,
                        "args": [[a.slot, a.component, list(a.deriv)] for a in f.args],
                        "alpha": list(f.alpha),
                        "pow": p,
                    }
                )
        out.append({"coeff": str(expr.terms[m]), "factors": factors})
    return out


# ---------------------------------------------------------------------------
# Nonlinearity specifications and counterterms
# ---------------------------------------------------------------------------


DRIFT = None  # key used for the noise-free nonlinearity F_t


@dataclass
class NonlinearitySpec:
    """The right-hand side nonlinearities ``F_t^Xi`` keyed by ``(t, Xi or DRIFT)``.

    Missing entries are zero.  ``dim`` is the multi-index length.
    """

    components: tuple[str, ...]
    entries: dict[tuple[str, str | None], SymExpr]
    dim: int

    def F(self, t: str, xi: str | None = DRIFT) -> SymExpr:
        if t not in self.components:
            raise KeyError(f"no nonlinearity declared for component {t!r}")
        return self.entries.get((t, xi), SymExpr())

    def u(self, t: str, k: MultiIndex | None = None) -> VarId:
        return VarId(t, tuple(k) if k is not None else (0,) * self.dim, "u")

    @property
    def single_equation(self) -> bool:
        return len(self.components) == 1

    def simplicity_mode(self) -> bool:
        """All nonlinearities depend on zero-derivative solution variables only."""
        return all(is_zero(v.deriv) for e in self.entries.values() for v in e.variables())

    def is_polynomial(self) -> bool:
        return all(e.backend == "polynomial" for e in self.entries.values())


def _factor_nonlinearity(spec: NonlinearitySpec, node_type: str, noise: str | None) -> SymExpr:
    xi = None if noise is None else base_type(noise)
    base = spec.F(base_type(node_type), xi)
    if is_dual(node_type):
        return frechet_derivative(base)
    return base


def _node_noise(tree: DecoratedTree, v: int) -> str | None:
    noises = [c for c in tree.children(v) if tree.noise_leaf[c]]
    if len(noises) > 1:
        raise SpecViolation(f"node {v} carries more than one noise edge")
    return tree.edge_type[noises[0]] if noises else None


def node_factor(tree: DecoratedTree, v: int, spec: NonlinearitySpec, target: str) -> SymExpr:
    """``d^{n(v)} prod_j D_{(t_j,k_j)} F_{t(v)}^{Xi[v]}`` for one node."""
    node_type = target if tree.parent[v] is None else tree.edge_type[v]
    expr = _factor_nonlinearity(spec, node_type, _node_noise(tree, v))
    for c in tree.children(v):
        if tree.noise_leaf[c]:
            continue
        t = tree.edge_type[c]
        var = VarId(base_type(t), tree.edge_dec[c], "w" if is_dual(t) else "u")
        expr = partial(expr, var)
        if expr.is_zero():
            return expr
    return space_derivative_multi(expr, tree.node_dec[v])


def upsilon(tree: DecoratedTree, spec: NonlinearitySpec, target: str) -> SymExpr:
    """Counterterm function of a tree for the given root type."""
    out = SymExpr.const(1)
    for v in tree.nodes():
        f = node_factor(tree, v, spec, target)
        if f.is_zero():
            return f
        out = out * f
    return out


def upsilon_dual(tree: DecoratedTree, spec: NonlinearitySpec, target: str) -> SymExpr:
    """Counterterm of a dual tree; requires nonlinearities depending on ``u`` only."""
    if not spec.simplicity_mode():
        raise SpecViolation("dual counterterms need nonlinearities depending on the solution only")
    return upsilon(tree, spec, target)


def is_nonvanishing(tree: DecoratedTree, spec: NonlinearitySpec, target: str) -> bool:
    """Whether no node factor of the counterterm vanishes identically."""
    return all(not node_factor(tree, v, spec, target).is_zero() for v in tree.nodes())


def mixed_node_flags(tree: DecoratedTree, spec: NonlinearitySpec, target: str) -> list[int]:
    """Nodes whose factor mixes polynomial and generic parts.

    Cancellations between such parts cannot be certified, so callers surface
    these nodes instead of silently trusting the verdict.
    """
    flagged = []
    for v in tree.nodes():
        f = node_factor(tree, v, spec, target)
        has_atom = any(any(isinstance(x, Atom) for x, _ in m) for m in f.terms)
        pure_poly = any(not any(isinstance(x, Atom) for x, _ in m) for m in f.terms)
        if has_atom and pure_poly:
            flagged.append(v)
    return flagged


# ---------------------------------------------------------------------------
# Parsing of the nonlinearity section
# ---------------------------------------------------------------------------


def parse_fraction(x) -> Fraction:
    if isinstance(x, bool):
        raise ValueError("booleans are not numbers")
    if isinstance(x, (int, Fraction)):
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(x)
    raise ValueError(f"expected an integer or a 'p/q' string, got {x!r}")


def _parse_var(spec, dim: int) -> VarId:
    if isinstance(spec, str):
        # "u_t" or "w_t"
        slot, _, comp = spec.partition("_")
        if slot not in ("u", "w") or not comp:
            raise ValueError(f"bad variable {spec!r}")
        return VarId(comp, (0,) * dim, slot)
    slot, comp, deriv = spec
    if slot not in ("u", "w"):
        raise ValueError(f"bad variable slot {slot!r}")
    if len(deriv) != dim:
        raise ValueError(f"derivative index {deriv} needs length {dim}")
    return VarId(comp, tuple(deriv), slot)


def parse_expr(node, dim: int) -> SymExpr:
    """Parse the nested-array expression format of spec files."""
    if isinstance(node, (int, str)) and not isinstance(node, bool):
        return SymExpr.const(parse_fraction(node))
    if isinstance(node, dict):
        if "symbol" not in node:
            raise ValueError(f"generic symbol needs a 'symbol' key: {node!r}")
        raw = node.get("args", [node["arg"]] if "arg" in node else None)
        if not raw:
            raise ValueError(f"generic symbol {node['symbol']!r} needs arguments")
        return SymExpr.symbol(node["symbol"], *(_parse_var(a, dim) for a in raw))
    if isinstance(node, list) and node:
        op, args = node[0], node[1:]
        if op in ("u", "w") and len(args) == 2:
            return SymExpr.var(_parse_var(node, dim))
        parsed = [parse_expr(a, dim) for a in args]
        if op == "+":
            return sum(parsed, SymExpr())
        if op == "*":
            out = SymExpr.const(1)
            for p in parsed:
                out = out * p
            return out
        if op == "-":
            if len(parsed) == 1:
                return -parsed[0]
            if len(parsed) == 2:
                return parsed[0] - parsed[1]
        if op == "^" and len(args) == 2 and isinstance(args[1], int):
            return parsed[0] ** args[1]
    raise ValueError(f"cannot parse expression {node!r}")


def expr_from_json(terms: Iterable[dict]) -> SymExpr:
    """Inverse of :func:`to_json`."""
    out = SymExpr()
    for term in terms:
        factors: dict[Factor, int] = {}
        for f in term["factors"]:
            if "var" in f:
                slot, comp, deriv = f["var"]
                key: Factor = VarId(comp, tuple(deriv), slot)
            else:
                key = Atom(f["symbol"], tuple(VarId(c, tuple(d), s) for s, c, d in f["args"]), tuple(f["alpha"]))
            factors[key] = factors.get(key, 0) + f["pow"]
        out = out + SymExpr({_mono(factors): Fraction(term["coeff"])})
    return out


def transport_direction(expr: SymExpr) -> int | None:
    """Return ``i`` when ``expr`` is exactly ``d_i u`` for a single direction ``i``."""
    if len(expr.terms) != 1:
        return None
    ((m, c),) = expr.terms.items()
    if c != 1 or len(m) != 1:
        return None
    f, p = m[0]
    if not isinstance(f, VarId) or p != 1 or f.slot != "u":
        return None
    nonzero = [i for i, k in enumerate(f.deriv) if k]
    if len(nonzero) == 1 and f.deriv[nonzero[0]] == 1 and nonzero[0] > 0:
        return nonzero[0]
    return None


__all__ = [
    "Atom",
    "DRIFT",
    "NonlinearitySpec",
    "SymExpr",
    "VarId",
    "evaluate",
    "expr_from_json",
    "frechet_derivative",
    "instantiate",
    "is_nonvanishing",
    "node_factor",
    "parse_expr",
    "parse_fraction",
    "partial",
    "rename_slot",
    "render",
    "space_derivative",
    "to_json",
    "transport_direction",
    "upsilon",
    "upsilon_dual",
]
