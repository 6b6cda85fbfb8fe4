"""Independent reference implementations used by the tests.

Nothing here calls the staged enumerator or the recursive symmetry factor;
the helpers only reuse the tree container, the rule grammar and canonical
codes (which are tested separately for isomorphism invariance).
"""

from __future__ import annotations

import math
from collections import Counter
from fractions import Fraction
from functools import lru_cache

from rsdual.core import DecoratedTree, Nested, Scaling, from_nested
from rsdual.rules import Rule


def _items(rule: Rule) -> list[tuple[str, tuple[int, ...]]]:
    out = set()
    for t in rule.table.kernel_types:
        for p in rule.patterns(t):
            out |= p.items()
    return sorted(out)


def brute_force_shapes(rule: Rule, target: str, max_edges: int) -> list[DecoratedTree]:
    """Every conforming tree with at most ``max_edges`` edges and zero node decorations.

    Subtrees are generated exhaustively by edge count; the only filter is
    the rule check at each node.
    """
    table = rule.table
    items = _items(rule)
    zero = (0,) * rule.dim

    @lru_cache(maxsize=None)
    def rooted(t: str, n: int) -> tuple[Nested, ...]:
        """Conforming subtrees hanging below a ``t`` edge, with exactly ``n`` edges."""
        found = {}
        for children in multisets(n):
            counter = Counter((a, k) for a, k, _ in children)
            if rule.allows(t, counter):
                nested = Nested(zero, tuple(children))
                found[from_nested(nested).code] = nested
        return tuple(found[c] for c in sorted(found))

    @lru_cache(maxsize=None)
    def planted(m: int) -> tuple[tuple[str, tuple[int, ...], Nested | None], ...]:
        out = []
        for a, k in items:
            if table.is_noise(a):
                if m == 1:
                    out.append((a, k, None))
            else:
                out.extend((a, k, sub) for sub in rooted(a, m - 1))
        return tuple(out)

    @lru_cache(maxsize=None)
    def multisets(n: int) -> tuple[tuple, ...]:
        pieces = [(m, p) for m in range(1, n + 1) for p in planted(m)]
        out = []

        def rec(start: int, left: int, acc: list) -> None:
            if left == 0:
                out.append(tuple(acc))
                return
            for i in range(start, len(pieces)):
                m, p = pieces[i]
                if m <= left:
                    acc.append(p)
                    rec(i, left - m, acc)
                    acc.pop()

        rec(0, n, [])
        return tuple(out)

    shapes = {}
    for n in range(max_edges + 1):
        for nested in rooted(target, n):
            tree = from_nested(nested)
            shapes[tree.code] = tree
    return [shapes[c] for c in sorted(shapes)]


def plain_homogeneity(tree: DecoratedTree, hom, scaling: Scaling) -> Fraction:
    total = Fraction(0)
    for v in range(tree.size):
        total += scaling.degree(tree.node_dec[v])
        if tree.parent[v] is not None:
            total += Fraction(hom[tree.edge_type[v]]) - scaling.degree(tree.edge_dec[v])
    return total


def brute_force_family(rule: Rule, scaling: Scaling, target: str, cutoff: Fraction, max_edges: int) -> set[str]:
    """Codes of all conforming trees below ``cutoff`` with at most ``max_edges`` edges."""
    codes = set()
    for shape in brute_force_shapes(rule, target, max_edges):
        h0 = plain_homogeneity(shape, rule.table.hom, scaling)
        if h0 >= cutoff:
            continue
        nodes = shape.nodes()
        options = scaling.multi_indices_below(cutoff - h0)

        def rec(i: int, used: int, decs: list) -> None:
            if i == len(nodes):
                node_dec = list(shape.node_dec)
                for v, k in zip(nodes, decs):
                    node_dec[v] = k
                codes.add(shape.replace(node_dec=tuple(node_dec)).code)
                return
            for k in options:
                if h0 + used + scaling.degree(k) < cutoff:
                    decs.append(k)
                    rec(i + 1, used + scaling.degree(k), decs)
                    decs.pop()

        rec(0, 0, [])
    return codes


def automorphism_count(tree: DecoratedTree) -> int:
    """Label-preserving automorphisms fixing the root, by backtracking."""
    order = []
    stack = [tree.root]
    while stack:
        v = stack.pop()
        order.append(v)
        stack.extend(tree.children(v))

    def label(v):
        return (tree.edge_type[v], tree.edge_dec[v], tree.node_dec[v], tree.noise_leaf[v], len(tree.children(v)))

    count = 0

    def rec(i: int, image: dict[int, int], used: set[int]) -> None:
        nonlocal count
        if i == len(order):
            count += 1
            return
        v = order[i]
        if tree.parent[v] is None:
            candidates = [tree.root]
        else:
            candidates = tree.children(image[tree.parent[v]])
        for w in candidates:
            if w not in used and label(w) == label(v):
                image[v] = w
                used.add(w)
                rec(i + 1, image, used)
                used.discard(w)
                del image[v]

    rec(0, {}, set())
    return count


def brute_symmetry_factor(tree: DecoratedTree) -> int:
    return automorphism_count(tree) * math.prod(math.prod(math.factorial(x) for x in tree.node_dec[v]) for v in range(tree.size))


def random_relabel(tree: DecoratedTree, rng) -> DecoratedTree:
    perm = list(range(tree.size))
    rng.shuffle(perm)
    return tree.relabel(perm)


def children_permutations(tree: DecoratedTree) -> int:
    """Number of orderings of all child lists (for sanity bounds in tests)."""
    return math.prod(math.factorial(len(tree.children(v))) for v in range(tree.size))


__all__ = [
    "automorphism_count",
    "brute_force_family",
    "brute_force_shapes",
    "brute_symmetry_factor",
    "children_permutations",
    "plain_homogeneity",
    "random_relabel",
]
