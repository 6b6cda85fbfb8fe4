"""Structural operators on trees.

The shift operator retypes subsets of noise edges to a hatted copy, the
telescope splits a difference of two hat labels leaf by leaf, and the
dualisation maps retype root paths to dual kernels.  The root shift re-roots
a dual tree at its distinguished node and moves node decorations onto the old
root with signed binomial weights.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Iterator, Sequence

from .core import (
    DecoratedTree,
    TreeError,
    add_mi,
    base_type,
    binom_mi,
    dual_type,
    from_nested,
    hat_label,
    hat_type,
    is_dual,
    sub_mi,
)
from .rules import q_project

HAT = "1"
TELESCOPE_LABELS = ("h", "k", "h-k")


@dataclass
class TreeSum:
    """Finite integer (or rational) combination of trees keyed by canonical code."""

    terms: dict[str, tuple[DecoratedTree, Fraction]] = field(default_factory=dict)

    def add(self, tree: DecoratedTree, coeff: int | Fraction = 1) -> None:
        code = tree.code
        old = self.terms.get(code, (tree, Fraction(0)))[1]
        new = old + coeff
        if new:
            self.terms[code] = (tree, new)
        else:
            self.terms.pop(code, None)

    def __iter__(self) -> Iterator[tuple[DecoratedTree, Fraction]]:
        for code in sorted(self.terms):
            yield self.terms[code]

    def __len__(self) -> int:
        return len(self.terms)

    def coefficients(self) -> dict[str, Fraction]:
        return {c: v for c, (_, v) in self.terms.items()}

    def to_json(self) -> list[dict]:
        return [{"coeff": str(v), "rpow": 0, "tree": c} for c, (_, v) in sorted(self.terms.items())]


@dataclass
class TreePolynomial:
    """Trees with coefficients that are polynomials in a formal variable ``r``."""

    terms: dict[str, tuple[DecoratedTree, dict[int, int]]] = field(default_factory=dict)

    def add(self, tree: DecoratedTree, rpow: int, coeff: int = 1) -> None:
        code = tree.code
        _, poly = self.terms.setdefault(code, (tree, {}))
        poly[rpow] = poly.get(rpow, 0) + coeff
        if not poly[rpow]:
            del poly[rpow]
        if not poly:
            del self.terms[code]

    def at(self, r: int | Fraction) -> TreeSum:
        out = TreeSum()
        for tree, poly in self.terms.values():
            out.add(tree, sum(Fraction(c) * Fraction(r) ** p for p, c in poly.items()))
        return out

    def slice(self, power: int) -> TreeSum:
        out = TreeSum()
        for tree, poly in self.terms.values():
            if poly.get(power):
                out.add(tree, poly[power])
        return out

    def __len__(self) -> int:
        return len(self.terms)

    def to_json(self) -> list[dict]:
        return [
            {"coeff": str(c), "rpow": p, "tree": code}
            for code, (_, poly) in sorted(self.terms.items())
            for p, c in sorted(poly.items())
        ]


# ---------------------------------------------------------------------------
# Shift, derivative and telescope
# ---------------------------------------------------------------------------


def _base_noise_edges(tree: DecoratedTree) -> list[int]:
    return [v for v in tree.noise_edges() if hat_label(tree.edge_type[v]) is None]


def shift_expand(tree: DecoratedTree, label: str = HAT) -> TreePolynomial:
    """``S_r tau``: sum over subsets ``H`` of noise edges, hatting ``H`` with weight ``r^{|H|}``."""
    edges = _base_noise_edges(tree)
    out = TreePolynomial()
    for size in range(len(edges) + 1):
        for subset in itertools.combinations(edges, size):
            retyped = tree.retype({v: hat_type(tree.edge_type[v], label) for v in subset})
            out.add(retyped, size)
    return out


def differentiate_D(tree: DecoratedTree, label: str = HAT) -> TreeSum:
    """The part of the shift expansion linear in ``r``."""
    out = TreeSum()
    for v in _base_noise_edges(tree):
        out.add(tree.retype({v: hat_type(tree.edge_type[v], label)}))
    return out


def hatted_leaves(tree: DecoratedTree, label: str = HAT) -> list[int]:
    return [v for v in tree.noise_edges() if hat_label(tree.edge_type[v]) == label]


def telescope_A(
    tree: DecoratedTree,
    order: Sequence[int],
    label: str = HAT,
    labels: tuple[str, str, str] = TELESCOPE_LABELS,
) -> TreeSum:
    """One term per hatted leaf ``u``: earlier leaves get ``h``, ``u`` gets ``h-k``, later ones ``k``."""
    leaves = hatted_leaves(tree, label)
    if sorted(order) != sorted(leaves) or len(set(order)) != len(order):
        raise TreeError(f"order {list(order)} is not a total order on the hatted leaves {leaves}")
    h, k, diff = labels
    out = TreeSum()
    for pos, u in enumerate(order):
        mapping = {}
        for j, v in enumerate(order):
            lab = h if j < pos else (diff if j == pos else k)
            mapping[v] = hat_type(base_type(tree.edge_type[v]), lab)
        out.add(tree.retype(mapping))
    return out


def relabel_hats(tree: DecoratedTree, label: str, new_label: str) -> DecoratedTree:
    return tree.retype({v: hat_type(base_type(tree.edge_type[v]), new_label) for v in hatted_leaves(tree, label)})


# ---------------------------------------------------------------------------
# Dualisation
# ---------------------------------------------------------------------------


def _check_node(tree: DecoratedTree, u: int) -> None:
    if not 0 <= u < tree.size or tree.noise_leaf[u]:
        raise TreeError(f"{u} is not a node of the tree")


def dualize_at(tree: DecoratedTree, u: int) -> DecoratedTree:
    """``FD_u``: retype the edges on the path from the root to ``u`` to their duals."""
    _check_node(tree, u)
    path = tree.path_to_root(u)[:-1]
    return tree.retype({v: dual_type(tree.edge_type[v]) for v in path})


def dualize_cut(tree: DecoratedTree, u: int, e: int) -> DecoratedTree:
    """``FD_{u,e}``: dualise the path to ``u`` and delete the kernel edge ``e`` above ``u``
    together with everything it carries."""
    _check_node(tree, u)
    if tree.parent[e] != u:
        raise TreeError(f"edge {e} does not start at node {u}")
    if tree.noise_leaf[e]:
        raise TreeError("cannot cut a noise edge")
    dual = dualize_at(tree, u)
    removed = set(tree.subtree_vertices(e))
    keep = [v for v in range(tree.size) if v not in removed]
    index = {v: i for i, v in enumerate(keep)}
    return DecoratedTree(
        parent=tuple(None if dual.parent[v] is None else index[dual.parent[v]] for v in keep),
        edge_type=tuple(dual.edge_type[v] for v in keep),
        edge_dec=tuple(dual.edge_dec[v] for v in keep),
        node_dec=tuple(dual.node_dec[v] for v in keep),
        noise_leaf=tuple(dual.noise_leaf[v] for v in keep),
    )


def dual_edges(tree: DecoratedTree) -> list[int]:
    return [v for v in tree.edges() if is_dual(tree.edge_type[v])]


def distinguished_node(tree: DecoratedTree) -> int:
    """The end of the dual-typed path that starts at the root."""
    duals = set(dual_edges(tree))
    v = tree.root
    walked = 0
    while True:
        nxt = [c for c in tree.children(v) if c in duals]
        if len(nxt) > 1:
            raise TreeError("dual edges branch; not a dual tree")
        if not nxt:
            break
        v = nxt[0]
        walked += 1
    if walked != len(duals):
        raise TreeError("dual edges do not form a path from the root")
    return v


def multiplicity_m(tree: DecoratedTree) -> int:
    """Number of nodes ``u`` of ``q sigma`` with ``FD_u(q sigma)`` isomorphic to ``sigma``."""
    base = q_project(tree)
    return sum(1 for u in base.nodes() if dualize_at(base, u).code == tree.code)


def _reroot(tree: DecoratedTree, new_root: int, node_dec=None) -> DecoratedTree:
    """Flip the parent links along the path from ``new_root`` to the root."""
    parent = list(tree.parent)
    etype = list(tree.edge_type)
    edec = list(tree.edge_dec)
    path = tree.path_to_root(new_root)  # new_root, ..., old root
    for lower, upper in zip(path[1:], path[:-1]):
        parent[lower] = upper
        etype[lower] = tree.edge_type[upper]
        edec[lower] = tree.edge_dec[upper]
    parent[new_root] = None
    etype[new_root] = None
    edec[new_root] = None
    return DecoratedTree(
        tuple(parent),
        tuple(etype),
        tuple(edec),
        tuple(node_dec) if node_dec is not None else tree.node_dec,
        tree.noise_leaf,
    )


def reroot_plain(tree: DecoratedTree) -> DecoratedTree:
    """``Phi``: re-root at the distinguished node without touching decorations."""
    return _reroot(tree, distinguished_node(tree))


def reroot_hat(tree: DecoratedTree) -> TreeSum:
    """``Phi-hat``: re-root at the distinguished node with the signed binomial transfer.

    For decorations ``n`` the result is
    ``sum_m (-1)^{|m|} binom(n, m) (Phi T)^{n - m + (sum m) 1_{old root}}``
    with ``m <= n`` componentwise at every node.
    """
    nu = distinguished_node(tree)
    rho = tree.root
    nodes = tree.nodes()
    choices = [list(itertools.product(*(range(x + 1) for x in tree.node_dec[v]))) for v in nodes]
    out = TreeSum()
    for ms in itertools.product(*choices):
        total = (0,) * tree.dim
        coeff = 1
        decs = list(tree.node_dec)
        for v, m in zip(nodes, ms):
            coeff *= binom_mi(tree.node_dec[v], m) * (-1) ** sum(m)
            decs[v] = sub_mi(decs[v], m)
            total = add_mi(total, m)
        decs[rho] = add_mi(decs[rho], total)
        out.add(_reroot(tree, nu, decs), coeff)
    return out


def apply_linear(op, combo: TreeSum) -> TreeSum:
    """Extend a tree-to-``TreeSum`` map linearly."""
    out = TreeSum()
    for tree, c in combo:
        for t2, c2 in op(tree):
            out.add(t2, c * c2)
    return out


def single(tree: DecoratedTree) -> TreeSum:
    out = TreeSum()
    out.add(tree)
    return out


def fd_images(trees: Iterable[DecoratedTree]) -> Iterator[tuple[DecoratedTree, int, DecoratedTree]]:
    """All ``(tau, u, FD_u tau)`` for the given trees."""
    for tau in trees:
        for u in tau.nodes():
            yield tau, u, dualize_at(tau, u)


def fd_cut_images(trees: Iterable[DecoratedTree]) -> Iterator[DecoratedTree]:
    """All ``FD_{u,e} tau`` over nodes ``u`` and kernel edges ``e`` leaving ``u``."""
    for tau in trees:
        for e in tau.kernel_edges():
            yield dualize_cut(tau, tau.parent[e], e)


def plant_tree(t: str, k, tree: DecoratedTree) -> DecoratedTree:
    """Plant without a type table (used for termwise checks)."""
    from .core import Nested

    return from_nested(Nested((0,) * tree.dim, ((t, tuple(k), tree.to_nested()),)))
