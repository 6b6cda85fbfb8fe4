"""Decorated typed trees.

A tree is stored as flat parent arrays over vertices ``0..n-1``.  Every vertex
except the root carries the edge that joins it to its parent (type id and
derivative decoration), and every vertex carries a polynomial decoration.
Noise edges always end in a *noise leaf*: a vertex with no children and zero
decoration.  Noise leaves are not counted among the nodes ``N(tau)``.

Canonical codes are the only notion of tree equality used in the package.
Their grammar is::

    NODE := DEC '(' k0,...,kd ')' '{' EDGE (',' EDGE)* '}'
    EDGE := typeid '^(' k0,...,kd ')' '->' NODE

where ``DEC`` is ``0`` with an empty parenthesis for a zero node decoration
and ``X`` followed by the entries otherwise.  Children are sorted by
``(type id, edge decoration, subcode)``.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Iterator, Mapping, Sequence

MultiIndex = tuple[int, ...]

DUAL_SUFFIX = "~"


class TreeError(ValueError):
    """Raised for structurally malformed trees."""


class SpecViolation(ValueError):
    """Raised when a tree breaks the at-most-one-noise-per-node assumption."""


# ---------------------------------------------------------------------------
# Scaling, multi-indices and type tables
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Scaling:
    """Space-time scaling ``s = (s_0, s_1, ..., s_d)`` with ``s_0`` the time weight."""

    s: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.s) < 2:
            raise ValueError("scaling needs a time weight and at least one space weight")
        if any(w < 1 for w in self.s):
            raise ValueError(f"scaling weights must be >= 1, got {self.s}")

    @classmethod
    def parabolic(cls, d: int) -> "Scaling":
        return cls((2,) + (1,) * d)

    @property
    def d(self) -> int:
        return len(self.s) - 1

    @property
    def dim(self) -> int:
        """Length of multi-indices, ``d + 1``."""
        return len(self.s)

    @property
    def abs_s(self) -> int:
        return sum(self.s)

    def degree(self, k: MultiIndex) -> int:
        """Scaled degree ``|k|_s``."""
        if len(k) != len(self.s):
            raise ValueError(f"multi-index {k} has wrong length for scaling {self.s}")
        return sum(w * ki for w, ki in zip(self.s, k))

    def zero(self) -> MultiIndex:
        return (0,) * len(self.s)

    def unit(self, i: int) -> MultiIndex:
        return tuple(1 if j == i else 0 for j in range(len(self.s)))

    def multi_indices_below(self, bound: Fraction | int, strict: bool = True) -> list[MultiIndex]:
        """All multi-indices with ``|k|_s < bound`` (or ``<=`` when ``strict`` is false)."""
        out: list[MultiIndex] = []

        def rec(prefix: list[int], remaining: Fraction | int) -> None:
            i = len(prefix)
            if i == len(self.s):
                out.append(tuple(prefix))
                return
            ki = 0
            while True:
                used = self.s[i] * ki
                if (used >= remaining) if strict else (used > remaining):
                    break
                rec(prefix + [ki], remaining - used)
                ki += 1
                if (self.s[i] * ki >= remaining) if strict else (self.s[i] * ki > remaining):
                    break

        if (bound > 0) if strict else (bound >= 0):
            rec([], bound)
        return sorted(out, key=lambda k: (self.degree(k), k))


def is_zero(k: MultiIndex) -> bool:
    return not any(k)


def add_mi(a: MultiIndex, b: MultiIndex) -> MultiIndex:
    return tuple(x + y for x, y in zip(a, b, strict=True))


def sub_mi(a: MultiIndex, b: MultiIndex) -> MultiIndex:
    return tuple(x - y for x, y in zip(a, b, strict=True))


def factorial_mi(k: MultiIndex) -> int:
    return math.prod(math.factorial(x) for x in k)


def binom_mi(n: MultiIndex, m: MultiIndex) -> int:
    return math.prod(math.comb(a, b) for a, b in zip(n, m, strict=True))


def hat_type(noise: str, label: str) -> str:
    """Type id of the copy of ``noise`` carrying the extension label ``label``."""
    return f"{noise}[{label}]"


def dual_type(kernel: str) -> str:
    """Type id of the dual copy of a kernel type."""
    return kernel + DUAL_SUFFIX


def is_dual(type_id: str) -> bool:
    return type_id.endswith(DUAL_SUFFIX)


def hat_label(type_id: str) -> str | None:
    if type_id.endswith("]") and "[" in type_id:
        return type_id[type_id.index("[") + 1 : -1]
    return None


def base_type(type_id: str) -> str:
    """The projection ``q``: strip extension labels and dual markers."""
    if is_dual(type_id):
        return type_id[: -len(DUAL_SUFFIX)]
    if hat_label(type_id) is not None:
        return type_id[: type_id.index("[")]
    return type_id


_RESERVED = ("[", "]", DUAL_SUFFIX, "^", "{", "}", ",", "(", ")", "->")


@dataclass(frozen=True)
class TypeTable:
    """Kernel and noise alphabets with homogeneity and ``reg`` assignments.

    Extended alphabets (hatted noise copies, dual kernels) live in the same
    table; ``base_type`` recovers the projection onto the base alphabet.
    """

    kernel_types: tuple[str, ...]
    noise_types: tuple[str, ...]
    hom: Mapping[str, Fraction]
    reg: Mapping[str, Fraction]

    def __post_init__(self) -> None:
        kernels, noises = set(self.kernel_types), set(self.noise_types)
        if kernels & noises:
            raise ValueError(f"kernel and noise types overlap: {sorted(kernels & noises)}")
        for t in self.kernel_types + self.noise_types:
            if t not in self.hom:
                raise ValueError(f"missing homogeneity for type {t!r}")
            if base_type(t) == t and any(r in t for r in _RESERVED):
                raise ValueError(f"type id {t!r} uses a reserved character")
        for t in self.kernel_types:
            if self.hom[t] <= 0:
                raise ValueError(f"kernel type {t!r} needs positive homogeneity")
        for t in self.noise_types:
            if self.hom[t] >= 0:
                raise ValueError(f"noise type {t!r} needs negative homogeneity")

    @property
    def types(self) -> tuple[str, ...]:
        return self.kernel_types + self.noise_types

    def is_noise(self, t: str) -> bool:
        return t in self.noise_types

    def is_kernel(self, t: str) -> bool:
        return t in self.kernel_types

    def check_known(self, t: str) -> None:
        if t not in self.hom:
            raise KeyError(f"unknown type id {t!r}")

    @property
    def base_kernel_types(self) -> tuple[str, ...]:
        return tuple(t for t in self.kernel_types if not is_dual(t))


# ---------------------------------------------------------------------------
# Trees
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Nested:
    """Recursive, order-free description of a tree used by builders."""

    dec: MultiIndex
    children: tuple[tuple[str, MultiIndex, "Nested | None"], ...] = ()


@dataclass(frozen=True)
class DecoratedTree:
    """A rooted typed tree with edge and node decorations.

    ``parent[v]`` is ``None`` only for the root.  The edge into ``v`` has type
    ``edge_type[v]`` and decoration ``edge_dec[v]``.  ``noise_leaf[v]`` marks
    the upper vertex of a noise edge.
    """

    parent: tuple[int | None, ...]
    edge_type: tuple[str | None, ...]
    edge_dec: tuple[MultiIndex | None, ...]
    node_dec: tuple[MultiIndex, ...]
    noise_leaf: tuple[bool, ...]

    def __post_init__(self) -> None:
        self.validate()

    # -- structure -------------------------------------------------------
    def validate(self) -> None:
        n = len(self.parent)
        if n == 0:
            raise TreeError("a tree needs at least one vertex")
        if not (len(self.edge_type) == len(self.edge_dec) == len(self.node_dec) == len(self.noise_leaf) == n):
            raise TreeError("inconsistent array lengths")
        roots = [v for v, p in enumerate(self.parent) if p is None]
        if len(roots) != 1:
            raise TreeError(f"expected exactly one root, found {len(roots)}")
        dim = len(self.node_dec[0])
        for v in range(n):
            seen = set()
            w: int | None = v
            while w is not None:
                if w in seen:
                    raise TreeError("cycle in parent links")
                seen.add(w)
                w = self.parent[w]
                if w is not None and not 0 <= w < n:
                    raise TreeError(f"parent index {w} out of range")
            if len(self.node_dec[v]) != dim:
                raise TreeError("node decorations of differing length")
            if self.parent[v] is None:
                if self.edge_type[v] is not None or self.noise_leaf[v]:
                    raise TreeError("the root carries no incoming edge")
            else:
                if self.edge_type[v] is None or self.edge_dec[v] is None:
                    raise TreeError(f"vertex {v} lacks an incoming edge type")
                if len(self.edge_dec[v]) != dim:
                    raise TreeError("edge decoration of wrong length")
        for v in range(n):
            if self.noise_leaf[v]:
                if self.children(v):
                    raise TreeError("noise edges must end in a leaf")
                if not is_zero(self.node_dec[v]) or not is_zero(self.edge_dec[v]):
                    raise TreeError("noise edges and their leaves carry zero decorations")

    @cached_property
    def root(self) -> int:
        return self.parent.index(None)

    @cached_property
    def _children(self) -> tuple[tuple[int, ...], ...]:
        kids: list[list[int]] = [[] for _ in self.parent]
        for v, p in enumerate(self.parent):
            if p is not None:
                kids[p].append(v)
        return tuple(tuple(k) for k in kids)

    def children(self, v: int) -> tuple[int, ...]:
        return self._children[v]

    @property
    def dim(self) -> int:
        return len(self.node_dec[0])

    @property
    def size(self) -> int:
        return len(self.parent)

    def nodes(self) -> list[int]:
        """``N(tau)``: vertices that are not noise leaves."""
        return [v for v in range(self.size) if not self.noise_leaf[v]]

    def edges(self) -> list[int]:
        """All edges, each identified by its upper vertex."""
        return [v for v in range(self.size) if self.parent[v] is not None]

    def kernel_edges(self) -> list[int]:
        return [v for v in self.edges() if not self.noise_leaf[v]]

    def noise_edges(self) -> list[int]:
        return [v for v in self.edges() if self.noise_leaf[v]]

    @property
    def n_edges(self) -> int:
        return self.size - 1

    def path_to_root(self, v: int) -> list[int]:
        """Vertices from ``v`` down to the root, inclusive."""
        out = [v]
        while self.parent[out[-1]] is not None:
            out.append(self.parent[out[-1]])  # type: ignore[arg-type]
        return out

    def subtree_vertices(self, v: int) -> list[int]:
        out, stack = [], [v]
        while stack:
            w = stack.pop()
            out.append(w)
            stack.extend(self.children(w))
        return out

    # -- canonical form ----------------------------------------------------
    def _vertex_code(self, v: int, memo: dict[int, str]) -> str:
        if v in memo:
            return memo[v]
        parts = []
        for c in self.children(v):
            parts.append((self.edge_type[c], self.edge_dec[c], self._vertex_code(c, memo)))
        parts.sort()
        body = ",".join(f"{t}^({_fmt(k)})->{sub}" for t, k, sub in parts)
        code = f"{_node_token(self.node_dec[v])}{{{body}}}"
        memo[v] = code
        return code

    @cached_property
    def _codes(self) -> dict[int, str]:
        memo: dict[int, str] = {}
        for v in range(self.size):
            self._vertex_code(v, memo)
        return memo

    @property
    def code(self) -> str:
        return self._codes[self.root]

    def vertex_code(self, v: int) -> str:
        """Canonical code of the subtree rooted at ``v``."""
        return self._codes[v]

    def __str__(self) -> str:
        return self.code

    # -- construction helpers ----------------------------------------------
    def to_nested(self, v: int | None = None) -> Nested:
        v = self.root if v is None else v
        kids = []
        for c in self.children(v):
            sub = None if self.noise_leaf[c] else self.to_nested(c)
            kids.append((self.edge_type[c], self.edge_dec[c], sub))
        return Nested(self.node_dec[v], tuple(kids))

    def subtree(self, v: int) -> "DecoratedTree":
        return from_nested(self.to_nested(v))

    def replace(self, **changes) -> "DecoratedTree":
        data = dict(
            parent=self.parent,
            edge_type=self.edge_type,
            edge_dec=self.edge_dec,
            node_dec=self.node_dec,
            noise_leaf=self.noise_leaf,
        )
        data.update(changes)
        return DecoratedTree(**data)

    def retype(self, mapping: Mapping[int, str]) -> "DecoratedTree":
        """Copy with the edges into the given vertices retyped; node ids are kept."""
        types = list(self.edge_type)
        for v, t in mapping.items():
            if self.parent[v] is None:
                raise TreeError("cannot retype the root")
            types[v] = t
        return self.replace(edge_type=tuple(types))

    def relabel(self, perm: Sequence[int]) -> "DecoratedTree":
        """Isomorphic copy where old vertex ``v`` becomes ``perm[v]``."""
        n = self.size
        inv = [0] * n
        for old, new in enumerate(perm):
            inv[new] = old
        parent = tuple(None if self.parent[inv[i]] is None else perm[self.parent[inv[i]]] for i in range(n))
        return DecoratedTree(
            parent=parent,
            edge_type=tuple(self.edge_type[inv[i]] for i in range(n)),
            edge_dec=tuple(self.edge_dec[inv[i]] for i in range(n)),
            node_dec=tuple(self.node_dec[inv[i]] for i in range(n)),
            noise_leaf=tuple(self.noise_leaf[inv[i]] for i in range(n)),
        )

    def types_used(self) -> set[str]:
        return {t for t in self.edge_type if t is not None}


def _fmt(k: MultiIndex) -> str:
    return ",".join(str(x) for x in k)


def _node_token(k: MultiIndex) -> str:
    return "0()" if is_zero(k) else f"X({_fmt(k)})"


def canonical_encode(tree: DecoratedTree) -> str:
    return tree.code


def from_nested(nested: Nested) -> DecoratedTree:
    parent: list[int | None] = []
    edge_type: list[str | None] = []
    edge_dec: list[MultiIndex | None] = []
    node_dec: list[MultiIndex] = []
    noise: list[bool] = []
    dim = len(nested.dec)

    def add(n: Nested, par: int | None, t: str | None, k: MultiIndex | None) -> None:
        v = len(parent)
        parent.append(par)
        edge_type.append(t)
        edge_dec.append(k)
        node_dec.append(n.dec)
        noise.append(False)
        for ct, ck, child in n.children:
            if child is None:
                parent.append(v)
                edge_type.append(ct)
                edge_dec.append(ck)
                node_dec.append((0,) * dim)
                noise.append(True)
            else:
                add(child, v, ct, ck)

    add(nested, None, None, None)
    return DecoratedTree(tuple(parent), tuple(edge_type), tuple(edge_dec), tuple(node_dec), tuple(noise))


# ---------------------------------------------------------------------------
# Algebraic builders
# ---------------------------------------------------------------------------


def unit(dim: int) -> DecoratedTree:
    """The trivial tree with a single undecorated node."""
    return from_nested(Nested((0,) * dim))


def monomial(k: MultiIndex) -> DecoratedTree:
    """``X^k``: a single node with decoration ``k``."""
    return from_nested(Nested(tuple(k)))


def noise(xi: str, dim: int) -> DecoratedTree:
    """The tree ``Xi``: a node carrying one noise edge."""
    zero = (0,) * dim
    return from_nested(Nested(zero, ((xi, zero, None),)))


def plant(t: str, k: MultiIndex, tree: DecoratedTree, table: TypeTable | None = None) -> DecoratedTree:
    """``J_t^k[tree]``: a new root joined to the old root by an edge of type ``t``."""
    if table is not None:
        table.check_known(t)
        if table.is_noise(t):
            raise TreeError(f"cannot plant along noise type {t!r}")
    zero = (0,) * tree.dim
    return from_nested(Nested(zero, ((t, tuple(k), tree.to_nested()),)))


def product(*trees: DecoratedTree) -> DecoratedTree:
    """Tree product: identify the roots and add their decorations."""
    if not trees:
        raise TreeError("empty product")
    dec = trees[0].node_dec[trees[0].root]
    kids: list = []
    for tr in trees:
        nd = tr.to_nested()
        if tr is not trees[0]:
            dec = add_mi(dec, nd.dec)
        kids.extend(nd.children)
    return from_nested(Nested(dec, tuple(kids)))


def with_root_dec(tree: DecoratedTree, k: MultiIndex) -> DecoratedTree:
    nd = tree.to_nested()
    return from_nested(Nested(add_mi(nd.dec, tuple(k)), nd.children))


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------


def parse_code(code: str, is_noise_type, dim: int | None = None) -> DecoratedTree:
    """Parse a canonical code.

    ``is_noise_type`` is a ``TypeTable`` or a predicate on type ids.  ``dim``
    is only needed for the single-vertex tree, whose code carries no
    multi-index.
    """
    pred = is_noise_type.is_noise if isinstance(is_noise_type, TypeTable) else is_noise_type
    pos = 0
    seen_dims: set[int] = set()

    def expect(s: str) -> None:
        nonlocal pos
        if not code.startswith(s, pos):
            raise TreeError(f"expected {s!r} at position {pos} in {code!r}")
        pos += len(s)

    def ints() -> tuple[int, ...]:
        nonlocal pos
        end = code.find(")", pos)
        if end < 0:
            raise TreeError(f"unterminated multi-index in {code!r}")
        body = code[pos:end]
        pos = end + 1
        try:
            return tuple(int(x) for x in body.split(",")) if body else ()
        except ValueError as exc:
            raise TreeError(f"bad multi-index {body!r}") from exc

    def node() -> Nested:
        nonlocal pos
        if code.startswith("0(", pos):
            pos += 2
            if ints():
                raise TreeError("the zero decoration token takes no entries")
            dec: tuple[int, ...] = ()
        else:
            expect("X(")
            dec = ints()
            seen_dims.add(len(dec))
        expect("{")
        kids = []
        while not code.startswith("}", pos):
            if kids:
                expect(",")
            end = code.find("^(", pos)
            if end < 0:
                raise TreeError(f"missing edge decoration in {code!r}")
            t = code[pos:end]
            pos = end + 2
            k = ints()
            seen_dims.add(len(k))
            expect("->")
            sub = node()
            if pred(t):
                if sub.children or any(sub.dec):
                    raise TreeError(f"noise edge {t!r} must end in a bare leaf")
                kids.append((t, k, None))
            else:
                kids.append((t, k, sub))
        expect("}")
        return Nested(dec, tuple(kids))

    root = node()
    if pos != len(code):
        raise TreeError(f"trailing characters in {code!r}")
    if dim is not None:
        seen_dims.add(dim)
    if len(seen_dims) != 1:
        raise TreeError(f"cannot determine a single multi-index length for {code!r}")
    (d,) = seen_dims

    def fill(n: Nested) -> Nested:
        return Nested(n.dec or (0,) * d, tuple((t, k, None if s is None else fill(s)) for t, k, s in n.children))

    return from_nested(fill(root))


# ---------------------------------------------------------------------------
# Homogeneity, symmetry factors, normal form
# ---------------------------------------------------------------------------


def homogeneity(tree: DecoratedTree, table: TypeTable, scaling: Scaling) -> Fraction:
    total = Fraction(0)
    for v in tree.edges():
        t = tree.edge_type[v]
        table.check_known(t)
        total += Fraction(table.hom[t]) - scaling.degree(tree.edge_dec[v])
    for v in tree.nodes():
        total += scaling.degree(tree.node_dec[v])
    return total


def symmetry_factor(tree: DecoratedTree) -> int:
    """``S(tau) = k! prod_i S(tau_i)^{p_i} p_i!`` over the normal form."""

    def rec(v: int) -> int:
        value = factorial_mi(tree.node_dec[v])
        groups: Counter = Counter()
        reps: dict = {}
        for c in tree.children(v):
            key = (tree.edge_type[c], tree.edge_dec[c], tree.vertex_code(c))
            groups[key] += 1
            reps[key] = c
        for key, p in groups.items():
            c = reps[key]
            s_child = 1 if tree.noise_leaf[c] else rec(c)
            value *= s_child**p * math.factorial(p)
        return value

    return rec(tree.root)


@dataclass(frozen=True)
class NormalForm:
    dec: MultiIndex
    noise: str | None
    planted: tuple[tuple[str, MultiIndex, DecoratedTree, int], ...]


def normal_form(tree: DecoratedTree) -> NormalForm:
    root = tree.root
    noises = [c for c in tree.children(root) if tree.noise_leaf[c]]
    if len(noises) > 1:
        raise SpecViolation("more than one noise edge at the root")
    groups: dict[tuple, list[int]] = {}
    for c in tree.children(root):
        if tree.noise_leaf[c]:
            continue
        groups.setdefault((tree.edge_type[c], tree.edge_dec[c], tree.vertex_code(c)), []).append(c)
    planted = tuple(
        (t, k, tree.subtree(vs[0]), len(vs)) for (t, k, _), vs in sorted(groups.items())
    )
    return NormalForm(tree.node_dec[root], tree.edge_type[noises[0]] if noises else None, planted)


def from_normal_form(nf: NormalForm) -> DecoratedTree:
    dim = len(nf.dec)
    kids: list = []
    if nf.noise is not None:
        kids.append((nf.noise, (0,) * dim, None))
    for t, k, sub, mult in nf.planted:
        kids.extend([(t, k, sub.to_nested())] * mult)
    return from_nested(Nested(nf.dec, tuple(kids)))


def iter_subsets(items: Sequence[int]) -> Iterator[tuple[int, ...]]:
    n = len(items)
    for mask in range(1 << n):
        yield tuple(items[i] for i in range(n) if mask >> i & 1)


def codes(trees: Iterable[DecoratedTree]) -> set[str]:
    return {t.code for t in trees}
