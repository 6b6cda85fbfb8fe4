"""Rules, conformance and enumeration of conforming trees.

A rule maps every type to a set of multisets of ``(type, multi-index)``
items.  Sets such as "a noise together with any number of kernel edges" are
infinite, so each entry set is stored as a finite union of *patterns*: a
fixed multiset plus a set of starred items that may be repeated any number
of times (including zero).
"""

from __future__ import annotations

import itertools
import logging
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Iterator, Mapping

from .core import (
    DecoratedTree,
    MultiIndex,
    Nested,
    Scaling,
    TypeTable,
    base_type,
    dual_type,
    from_nested,
    hat_type,
    homogeneity,
    is_dual,
)

log = logging.getLogger(__name__)

Item = tuple[str, MultiIndex]


class RuleError(ValueError):
    """Raised for rules that cannot be used (for instance non-subcritical ones)."""


class NotSubcritical(RuleError):
    """The rule fails the subcriticality test for the declared ``reg`` values."""


class CapExceeded(RuleError):
    """Enumeration would need node decorations beyond the configured cap."""


def multiset(items: Iterable[Item]) -> tuple[tuple[str, MultiIndex, int], ...]:
    """Canonical sorted ``(type, k, multiplicity)`` form of a multiset."""
    return tuple(sorted((t, tuple(k), m) for (t, k), m in Counter((t, tuple(k)) for t, k in items).items()))


def as_counter(ms: Iterable[tuple[str, MultiIndex, int]]) -> Counter:
    return Counter({(t, k): m for t, k, m in ms})


@dataclass(frozen=True)
class Pattern:
    """``fixed`` plus any number of copies of each starred item."""

    fixed: tuple[tuple[str, MultiIndex, int], ...]
    star: frozenset[Item] = frozenset()

    def matches(self, ms: Counter) -> bool:
        fixed = as_counter(self.fixed)
        for item, count in ms.items():
            base = fixed.get(item, 0)
            if item in self.star:
                if count < base:
                    return False
            elif count != base:
                return False
        return all(item in ms for item in fixed)

    def items(self) -> set[Item]:
        return {(t, k) for t, k, _ in self.fixed} | set(self.star)

    def to_json(self) -> list:
        out = []
        for t, k, m in self.fixed:
            out.extend([[t, list(k)]] * m)
        for t, k in sorted(self.star):
            out.append([t, list(k), "*"])
        return out


@dataclass
class Rule:
    """A rule over the alphabet of ``table``.  Noise types implicitly map to ``{∅}``."""

    table: TypeTable
    entries: dict[str, tuple[Pattern, ...]]
    dim: int
    dual_cap: int | None = None
    noise_entries: dict[str, tuple[Pattern, ...]] = field(default_factory=dict)

    def patterns(self, t: str) -> tuple[Pattern, ...]:
        if self.table.is_noise(t):
            return self.noise_entries.get(t, (Pattern(()),))
        return self.entries.get(t, ())

    def allows(self, t: str, ms: Counter | Iterable[Item]) -> bool:
        counter = ms if isinstance(ms, Counter) else Counter((a, tuple(k)) for a, k in ms)
        counter = Counter({k: v for k, v in counter.items() if v})
        return any(p.matches(counter) for p in self.patterns(t))

    def to_json(self) -> dict:
        out = {t: [p.to_json() for p in pats] for t, pats in self.entries.items()}
        payload: dict = {"rule": out}
        if self.dual_cap is not None:
            payload["dual_cap"] = self.dual_cap
        return payload

    def expand(self, t: str, max_star: int) -> set[tuple]:
        """Finite list of multisets, each starred item repeated at most ``max_star`` times."""
        out = set()
        for p in self.patterns(t):
            star = sorted(p.star)
            for counts in itertools.product(range(max_star + 1), repeat=len(star)):
                c = as_counter(p.fixed)
                for item, n in zip(star, counts):
                    c[item] += n
                out.add(multiset(c.elements()))
        return out


def rule_from_json(data: Mapping, table: TypeTable, dim: int) -> Rule:
    """Parse ``{"t": [[["Xi",[0,0]],["t",[0,0],"*"]], ...]}`` into a rule."""
    entries: dict[str, list[Pattern]] = {}
    for t, ent in data.items():
        if not table.is_kernel(t):
            raise RuleError(f"rule entries are only given for kernel types, got {t!r}")
        pats = []
        for raw in ent:
            fixed, star = [], set()
            for item in raw:
                if len(item) not in (2, 3) or len(item[1]) != dim:
                    raise RuleError(f"bad rule item {item!r} for type {t!r}")
                it = (item[0], tuple(int(x) for x in item[1]))
                table.check_known(it[0])
                if len(item) == 3:
                    if item[2] != "*":
                        raise RuleError(f"unknown item marker {item[2]!r}")
                    star.add(it)
                else:
                    fixed.append(it)
            pats.append(Pattern(multiset(fixed), frozenset(star)))
        entries[t] = pats
    for t in table.kernel_types:
        entries.setdefault(t, [])
    return Rule(table, {t: tuple(p) for t, p in entries.items()}, dim)


# ---------------------------------------------------------------------------
# Checks
# ---------------------------------------------------------------------------


def check_normal(rule: Rule) -> list[str]:
    """Violations of closure under sub-multisets; ``[]`` means normal."""
    problems = []
    for t in rule.table.kernel_types:
        if not rule.allows(t, Counter()):
            problems.append(f"R({t}) does not admit the empty multiset")
        for p in rule.patterns(t):
            fixed = as_counter(p.fixed)
            for item in sorted(fixed):
                smaller = fixed.copy()
                smaller[item] -= 1
                if not rule.allows(t, smaller):
                    problems.append(
                        f"R({t}) contains {_fmt_ms(fixed)} but not its sub-multiset {_fmt_ms(smaller)}"
                    )
    for xi, pats in rule.noise_entries.items():
        if pats != (Pattern(()),):
            problems.append(f"R({xi}) must be {{∅}} for a noise type")
    return problems


def check_noise_assumption(rule: Rule) -> list[str]:
    """At most one noise item per multiset, always with zero derivative."""
    problems = []
    for t in rule.table.kernel_types:
        for p in rule.patterns(t):
            noise_count = sum(m for a, _, m in p.fixed if rule.table.is_noise(a))
            if noise_count > 1:
                problems.append(f"R({t}) entry {_fmt_ms(as_counter(p.fixed))} has {noise_count} noises")
            for a, k in p.items():
                if rule.table.is_noise(a) and any(k):
                    problems.append(f"R({t}) uses a derivative-decorated noise ({a},{k})")
                if rule.table.is_noise(a) and (a, k) in p.star:
                    problems.append(f"R({t}) allows unboundedly many noises of type {a}")
    return problems


def _fmt_ms(c: Counter) -> str:
    items = [f"({t},{','.join(map(str, k))})" for (t, k), m in sorted(c.items()) for _ in range(m)]
    return "[" + " ".join(items) + "]"


@dataclass(frozen=True)
class SubcriticalReport:
    ok: bool
    gap: Fraction | None
    witness: tuple[str, str] | None = None

    def __bool__(self) -> bool:
        return self.ok


def item_reg(table: TypeTable, scaling: Scaling, item: Item) -> Fraction:
    t, k = item
    return Fraction(table.reg[t]) - scaling.degree(k)


def check_subcritical(rule: Rule, scaling: Scaling, table: TypeTable | None = None) -> SubcriticalReport:
    """Test ``reg(t) < |t| + inf_N reg(N)`` over kernel types; return the minimal slack.

    Noise types only need ``reg(Xi) <= |Xi|``: their entry set is ``{∅}`` and
    the value of ``reg`` on them only matters through kernel entries.
    """
    table = table or rule.table
    for t in table.types:
        if t not in table.reg:
            return SubcriticalReport(False, None, (t, "reg undefined"))
    for xi in table.noise_types:
        if table.reg[xi] > table.hom[xi]:
            return SubcriticalReport(False, None, (xi, "reg exceeds homogeneity"))
    gap: Fraction | None = None
    for t in table.kernel_types:
        for p in rule.patterns(t):
            for item in sorted(p.star):
                if item_reg(table, scaling, item) < 0:
                    return SubcriticalReport(False, None, (t, f"unbounded repetition of {item}"))
            value = Fraction(table.hom[t]) - table.reg[t]
            value += sum(m * item_reg(table, scaling, (a, k)) for a, k, m in p.fixed)
            if value <= 0:
                return SubcriticalReport(False, None, (t, _fmt_ms(as_counter(p.fixed))))
            gap = value if gap is None else min(gap, value)
    return SubcriticalReport(True, gap)


def suggest_reg(table: TypeTable, slack: Fraction) -> dict[str, Fraction]:
    """A candidate ``reg``: kernels get ``hom(t) + min noise hom + slack``, noises their homogeneity.

    The result is only a suggestion; spec files must state ``reg`` explicitly.
    """
    worst = min(table.hom[x] for x in table.noise_types)
    out = {x: Fraction(table.hom[x]) for x in table.noise_types}
    for t in table.kernel_types:
        out[t] = Fraction(table.hom[t]) + worst + slack
    return out


def node_multiset(tree: DecoratedTree, v: int) -> Counter:
    return Counter((tree.edge_type[c], tree.edge_dec[c]) for c in tree.children(v))


def conforms(tree: DecoratedTree, rule: Rule, target: str) -> bool:
    """Every node's outgoing multiset lies in the rule entry of its incoming type."""
    table = rule.table
    for v in range(tree.size):
        t = target if tree.parent[v] is None else tree.edge_type[v]
        if t not in table.hom:
            return False
        if tree.noise_leaf[v] != table.is_noise(t) and tree.parent[v] is not None:
            return False
        if not rule.allows(t, node_multiset(tree, v)):
            return False
    return True


# ---------------------------------------------------------------------------
# Enumeration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Member:
    tree: DecoratedTree
    hom: Fraction


@dataclass
class TreeFamily:
    """Conforming trees below a cutoff, keyed by target type and canonical code."""

    by_type: dict[str, dict[str, Member]]
    cutoff: Fraction
    dual_cap: int | None = None

    def trees(self, t: str) -> list[DecoratedTree]:
        return [m.tree for _, m in sorted(self.by_type.get(t, {}).items())]

    def codes(self, t: str) -> set[str]:
        return set(self.by_type.get(t, {}))

    def filtered(self, keep) -> "TreeFamily":
        return TreeFamily(
            {t: {c: m for c, m in ms.items() if keep(t, m.tree)} for t, ms in self.by_type.items()},
            self.cutoff,
            self.dual_cap,
        )

    def size(self) -> int:
        return sum(len(v) for v in self.by_type.values())


@dataclass(frozen=True)
class _Piece:
    value: Fraction  # homogeneity contribution of the planted piece
    type: str
    dec: MultiIndex
    sub: str  # canonical code of the subtree above the edge
    nested: Nested | None

    @property
    def key(self) -> tuple:
        return (self.type, self.dec, self.sub)

    @property
    def code(self) -> str:
        return f"{self.type}^({_fmtk(self.dec)})->{self.sub}"


def _subtree_bounds(rule: Rule, scaling: Scaling, cutoff: Fraction, gap: Fraction) -> dict[str, Fraction]:
    """Largest subtree homogeneity needed per kernel type.

    A subtree under an edge of type ``l`` inside a tree of type ``t`` below
    ``gamma_t`` has homogeneity below ``gamma_t - c_t - gap + c_l`` with
    ``c = reg - hom``; this is propagated to a fixed point.
    """
    table = rule.table
    c = {t: Fraction(table.reg[t]) - table.hom[t] for t in table.kernel_types}
    beta = {t: cutoff - c[t] for t in table.kernel_types}
    changed = True
    while changed:
        changed = False
        for t in table.kernel_types:
            for p in rule.patterns(t):
                for a, _ in p.items():
                    if table.is_kernel(a) and beta[t] - gap > beta[a]:
                        beta[a] = beta[t] - gap
                        changed = True
    return {t: beta[t] + c[t] for t in table.kernel_types}


def enumerate_trees(
    rule: Rule,
    scaling: Scaling,
    cutoff: Fraction | int,
    negative_only: bool = False,
    node_cap: int = 10,
    targets: Iterable[str] | None = None,
) -> TreeFamily:
    """All conforming trees with homogeneity strictly below ``cutoff``.

    Staged closure: stage ``n+1`` combines pieces built from stage ``n``
    trees according to the rule, pruning by homogeneity.  The subcriticality
    gap bounds the number of nodes below any cutoff, so the stages stabilise.
    """
    cutoff = Fraction(cutoff)
    table = rule.table
    report = check_subcritical(rule, scaling)
    if not report:
        raise NotSubcritical(f"rule is not subcritical: witness {report.witness}")
    bad = check_noise_assumption(rule)
    if bad:
        raise RuleError("; ".join(bad))
    gap = report.gap if report.gap is not None else Fraction(1)
    bounds = _subtree_bounds(rule, scaling, cutoff, gap)

    families: dict[str, dict[str, tuple[Fraction, Nested]]] = {t: {} for t in table.kernel_types}
    while True:
        pieces = _pieces(table, scaling, families)
        new = {t: _assemble(rule, scaling, t, bounds[t], pieces, node_cap) for t in table.kernel_types}
        if all(new[t].keys() == families[t].keys() for t in table.kernel_types):
            break
        families = new

    final_cut = min(cutoff, Fraction(0)) if negative_only else cutoff
    chosen = list(targets) if targets is not None else list(table.kernel_types)
    by_type: dict[str, dict[str, Member]] = {}
    for t in chosen:
        members = {}
        for code, (hom, nested) in families[t].items():
            if hom < final_cut:
                members[code] = Member(from_nested(nested), hom)
        by_type[t] = members
    return TreeFamily(by_type, final_cut, rule.dual_cap)


def _pieces(table, scaling, families):
    """Lookup of planted pieces per item, each list sorted by homogeneity."""
    cache: dict[Item, list[_Piece]] = {}

    def lookup(item: Item) -> list[_Piece]:
        if item not in cache:
            a, k = item
            if table.is_noise(a):
                lst = [_Piece(Fraction(table.hom[a]), a, k, "0(){}", None)]
            else:
                base = Fraction(table.hom[a]) - scaling.degree(k)
                lst = [_Piece(base + hom, a, k, code, nested) for code, (hom, nested) in families.get(a, {}).items()]
            lst.sort(key=lambda p: (p.value, p.key))
            cache[item] = lst
        return cache[item]

    return lookup


def _fmtk(k: MultiIndex) -> str:
    return ",".join(map(str, k))


def _choose(pieces: list[_Piece], count: int, budget: Fraction, rest_min: Fraction) -> Iterator[tuple[list[_Piece], Fraction]]:
    """Multisets of exactly ``count`` pieces whose total keeps ``sum + rest_min < budget``."""

    def rec(start: int, left: int, acc: list[_Piece], total: Fraction):
        if left == 0:
            yield list(acc), total
            return
        for i in range(start, len(pieces)):
            p = pieces[i]
            if total + left * p.value + rest_min >= budget:
                break
            acc.append(p)
            yield from rec(i, left - 1, acc, total + p.value)
            acc.pop()

    yield from rec(0, count, [], Fraction(0))


def _choose_any(pieces: list[_Piece], budget: Fraction, rest_min: Fraction) -> Iterator[tuple[list[_Piece], Fraction]]:
    """Multisets of any size; starred pieces always have positive value."""

    def rec(start: int, acc: list[_Piece], total: Fraction):
        yield list(acc), total
        for i in range(start, len(pieces)):
            p = pieces[i]
            if total + p.value + rest_min >= budget:
                break
            if p.value <= 0:
                raise RuleError(f"starred item {p.type} has a non-positive piece {p.code}")
            acc.append(p)
            yield from rec(i, acc, total + p.value)
            acc.pop()

    yield from rec(0, [], Fraction(0))


def _assemble(rule: Rule, scaling: Scaling, t: str, bound: Fraction, pieces, node_cap: int) -> dict[str, tuple[Fraction, Nested]]:
    out: dict[str, tuple[Fraction, Nested]] = {}
    for pat in rule.patterns(t):
        groups: list[tuple[Item, int | None]] = []
        fixed = as_counter(pat.fixed)
        for item in sorted(fixed):
            groups.append((item, fixed[item]))
        for item in sorted(pat.star):
            groups.append((item, None))
        lists = [pieces(item) for item, _ in groups]
        if any(count and not lst for (_, count), lst in zip(groups, lists)):
            continue
        mins = []
        for (item, count), lst in zip(groups, lists):
            mins.append(count * lst[0].value if count else Fraction(0))
        suffix = [sum(mins[i:], Fraction(0)) for i in range(len(mins) + 1)]

        def rec(gi: int, chosen: list[_Piece], total: Fraction):
            if gi == len(groups):
                yield chosen, total
                return
            item, count = groups[gi]
            if count is None:
                gen = _choose_any(lists[gi], bound, total + suffix[gi + 1])
                for sel, s in gen:
                    yield from rec(gi + 1, chosen + sel, total + s)
            else:
                for sel, s in _choose(lists[gi], count, bound - total, suffix[gi + 1]):
                    yield from rec(gi + 1, chosen + sel, total + s)

        for chosen, total in rec(0, [], Fraction(0)):
            room = bound - total
            decs = scaling.multi_indices_below(room)
            if decs and max(scaling.degree(k) for k in decs) > node_cap:
                raise CapExceeded(
                    f"type {t}: node decorations up to degree {room} needed, cap is {node_cap}"
                )
            ordered = sorted(chosen, key=lambda p: p.key)
            body = ",".join(p.code for p in ordered)
            kids = tuple((p.type, p.dec, p.nested) for p in ordered)
            for k in decs:
                code = ("0()" if not any(k) else f"X({_fmtk(k)})") + "{" + body + "}"
                if code not in out:
                    out[code] = (total + scaling.degree(k), Nested(k, kids))
    return out


# ---------------------------------------------------------------------------
# Extensions of rules and projections
# ---------------------------------------------------------------------------


def extend_types_noise(table: TypeTable, labels: Iterable[str]) -> TypeTable:
    """Add hatted copies ``(Xi, i)`` of every base noise type."""
    labels = list(labels)
    new_noises = list(table.noise_types)
    hom, reg = dict(table.hom), dict(table.reg)
    for xi in table.noise_types:
        if base_type(xi) != xi:
            continue
        for i in labels:
            h = hat_type(xi, i)
            if h not in new_noises:
                new_noises.append(h)
                hom[h] = table.hom[xi]
                if xi in table.reg:
                    reg[h] = table.reg[xi]
    return TypeTable(table.kernel_types, tuple(new_noises), hom, reg)


def extend_types_dual(table: TypeTable, theta: Fraction) -> TypeTable:
    """Add a dual copy of every base kernel type with ``reg = theta``."""
    kernels = list(table.kernel_types)
    hom, reg = dict(table.hom), dict(table.reg)
    for t in table.base_kernel_types:
        d = dual_type(t)
        if d not in kernels:
            kernels.append(d)
            hom[d] = table.hom[t]
            reg[d] = Fraction(theta)
    return TypeTable(tuple(kernels), table.noise_types, hom, reg)


def _preimages(items: Counter, options) -> Iterator[Counter]:
    """All multisets ``N`` with ``q N = items`` where ``options(item)`` lists the lifts."""
    per_item = []
    for item, m in sorted(items.items()):
        lifts = options(item)
        per_item.append([Counter(c) for c in itertools.combinations_with_replacement(lifts, m)])
    for combo in itertools.product(*per_item):
        total: Counter = Counter()
        for c in combo:
            total.update(c)
        yield total


def extend_rule_noise(rule: Rule, labels: Iterable[str]) -> Rule:
    """``R^I(t) = {N : qN in R(t)}`` over the alphabet with hatted noises."""
    labels = list(labels)
    table = extend_types_noise(rule.table, labels)

    def lifts(item: Item) -> list[Item]:
        a, k = item
        if rule.table.is_noise(a):
            return [(a, k)] + [(hat_type(a, i), k) for i in labels]
        return [item]

    entries = {}
    for t in rule.table.kernel_types:
        pats = []
        for p in rule.patterns(t):
            star = frozenset(x for item in p.star for x in lifts(item))
            for pre in _preimages(as_counter(p.fixed), lifts):
                pats.append(Pattern(multiset(pre.elements()), star))
        entries[t] = tuple(dict.fromkeys(pats))
    return Rule(table, entries, rule.dim, rule.dual_cap)


def extend_rule_dual(rule: Rule, theta: Fraction = Fraction(1, 100), cap: int = 3) -> Rule:
    """Kernel-dual extension.

    ``R(t)`` gains dual retypings of its kernel items and up to ``cap``
    extra ``(t~, 0)`` items; ``R(t~)`` keeps the multisets of ``R(t)``
    that still admit one more base kernel item.
    """
    base = rule.table
    table = extend_types_dual(base, theta)
    zero = (0,) * rule.dim
    duals = [dual_type(t) for t in base.base_kernel_types]

    def lifts(item: Item) -> list[Item]:
        a, k = item
        if base.is_kernel(a) and not is_dual(a):
            return [item, (dual_type(a), k)]
        return [item]

    entries: dict[str, tuple[Pattern, ...]] = {}
    for t in base.base_kernel_types:
        pats = []
        for p in rule.patterns(t):
            star = frozenset(x for item in p.star for x in lifts(item))
            for pre in _preimages(as_counter(p.fixed), lifts):
                for m in range(cap + 1):
                    for extra in itertools.combinations_with_replacement(duals, m):
                        c = pre.copy()
                        for d in extra:
                            c[(d, zero)] += 1
                        pats.append(Pattern(multiset(c.elements()), star))
        entries[t] = tuple(dict.fromkeys(pats))

    extended = Rule(table, dict(entries), rule.dim, cap)
    for t in base.base_kernel_types:
        pats = []
        for p in extended.patterns(t):
            for item in sorted(p.items()):
                a, _ = item
                if not (base.is_kernel(a) and not is_dual(a)):
                    continue
                if item in p.star:
                    pats.append(p)
                else:
                    c = as_counter(p.fixed)
                    c[item] -= 1
                    pats.append(Pattern(multiset(c.elements()), p.star))
        entries[dual_type(t)] = tuple(dict.fromkeys(pats))
    return Rule(table, entries, rule.dim, cap)


def q_project(obj, table: TypeTable | None = None):
    """Map extended types to their base types (trees, multisets or single type ids)."""
    if isinstance(obj, str):
        return base_type(obj)
    if isinstance(obj, DecoratedTree):
        return obj.replace(edge_type=tuple(None if t is None else base_type(t) for t in obj.edge_type))
    if isinstance(obj, Counter):
        out: Counter = Counter()
        for (a, k), m in obj.items():
            out[(base_type(a), k)] += m
        return out
    if isinstance(obj, tuple):
        return multiset((base_type(a), k) for a, k, m in obj for _ in range(m))
    raise TypeError(f"cannot project {type(obj).__name__}")


def tree_homogeneity(tree: DecoratedTree, rule: Rule, scaling: Scaling) -> Fraction:
    return homogeneity(tree, rule.table, scaling)
