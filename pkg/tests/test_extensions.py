from __future__ import annotations

from collections import Counter
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rsdual.core import TreeError, base_type, hat_label, hat_type, noise, plant, product, with_root_dec
from rsdual.extensions import (
    TreeSum,
    apply_linear,
    differentiate_D,
    distinguished_node,
    dualize_at,
    dualize_cut,
    fd_cut_images,
    hatted_leaves,
    multiplicity_m,
    reroot_hat,
    reroot_plain,
    shift_expand,
    single,
    telescope_A,
)
from rsdual.rules import q_project

from strategies import base_trees

Z = (0, 0)
XI = noise("Xi", 2)
I_XI = plant("t", Z, XI)
I_XI_XI = product(I_XI, XI)
CHERRY = product(I_XI, I_XI, XI)


def all_hatted(tree, label="1"):
    return tree.retype({v: hat_type(tree.edge_type[v], label) for v in tree.noise_edges()})


def expand_difference(combo: TreeSum) -> TreeSum:
    """Replace every ``h-k`` leaf by ``h`` minus ``k``."""
    out = TreeSum()
    for tree, c in combo:
        diffs = [v for v in tree.noise_edges() if hat_label(tree.edge_type[v]) == "h-k"]
        assert len(diffs) == 1
        (v,) = diffs
        out.add(tree.retype({v: hat_type("Xi", "h")}), c)
        out.add(tree.retype({v: hat_type("Xi", "k")}), -c)
    return out


@st.composite
def tree_and_node(draw, **kw):
    tree = draw(base_trees(**kw))
    return tree, draw(st.sampled_from(tree.nodes()))


class TestShift:
    def test_planted_noise_times_noise(self):
        poly = shift_expand(I_XI_XI)
        assert len(poly) == 4
        assert sorted(p for entry in poly.to_json() for p in [entry["rpow"]]) == [0, 1, 1, 2]
        assert poly.at(0).coefficients() == {I_XI_XI.code: 1}
        assert set(poly.slice(2).coefficients()) == {all_hatted(I_XI_XI).code}

    def test_derivative_is_linear_slice(self):
        assert differentiate_D(CHERRY).coefficients() == shift_expand(CHERRY).slice(1).coefficients()

    def test_symmetric_leaves_merge(self):
        # the two planted noises of the cherry are exchangeable, so hatting either gives one tree
        d = differentiate_D(CHERRY).coefficients()
        assert sorted(d.values()) == [1, 2]

    @given(base_trees(), st.integers(-3, 3))
    @settings(max_examples=100, deadline=None)
    def test_total_weight_is_binomial(self, tree, r):
        n = len(tree.noise_edges())
        assert sum(shift_expand(tree).at(r).coefficients().values()) == (1 + r) ** n

    @given(base_trees())
    @settings(max_examples=100, deadline=None)
    def test_every_term_projects_back(self, tree):
        for t, _ in shift_expand(tree).at(1):
            assert q_project(t).code == tree.code


class TestTelescope:
    def test_one_term_per_hatted_leaf(self):
        tree = all_hatted(CHERRY)
        order = hatted_leaves(tree)
        assert len(telescope_A(tree, order)) == 3

    def test_rejects_partial_order(self):
        tree = all_hatted(I_XI_XI)
        with pytest.raises(TreeError):
            telescope_A(tree, hatted_leaves(tree)[:1])

    @given(base_trees(), st.randoms(use_true_random=False))
    @settings(max_examples=100, deadline=None)
    def test_sum_telescopes(self, tree, rnd):
        tree = all_hatted(tree)
        order = hatted_leaves(tree)
        if not order:
            return
        rnd.shuffle(order)
        lhs = expand_difference(telescope_A(tree, order))
        rhs = TreeSum()
        rhs.add(tree.retype({v: hat_type("Xi", "h") for v in order}))
        rhs.add(tree.retype({v: hat_type("Xi", "k") for v in order}), -1)
        assert lhs.coefficients() == rhs.coefficients()


class TestDualisation:
    def test_root_gives_the_same_tree(self):
        assert dualize_at(I_XI_XI, I_XI_XI.root).code == I_XI_XI.code

    def test_inner_node(self):
        inner = next(u for u in I_XI_XI.nodes() if u != I_XI_XI.root)
        sigma = dualize_at(I_XI_XI, inner)
        assert sorted(sigma.edge_type[v] for v in sigma.edges()) == ["Xi", "Xi", "t~"]

    @given(tree_and_node())
    @settings(max_examples=150, deadline=None)
    def test_distinguished_node_round_trip(self, pair):
        tree, u = pair
        sigma = dualize_at(tree, u)
        assert distinguished_node(sigma) == u
        assert q_project(sigma).code == tree.code
        assert sum(1 for t in sigma.edge_type if t and t.endswith("~")) == len(tree.path_to_root(u)) - 1

    @given(base_trees())
    @settings(max_examples=100, deadline=None)
    def test_cut_removes_the_subtree(self, tree):
        for e in tree.kernel_edges():
            cut = dualize_cut(tree, tree.parent[e], e)
            assert cut.n_edges == tree.n_edges - len(tree.subtree_vertices(e))
            assert distinguished_node(cut) is not None

    def test_cut_images_of_cherry(self):
        codes = {s.code for s in fd_cut_images([CHERRY])}
        assert codes == {I_XI_XI.code}

    def test_cut_refuses_noise_edge(self):
        leaf = I_XI_XI.noise_edges()[0]
        with pytest.raises(TreeError):
            dualize_cut(I_XI_XI, I_XI_XI.parent[leaf], leaf)

    def test_branching_dual_edges_are_rejected(self):
        bad = CHERRY.retype({v: "t~" for v in CHERRY.kernel_edges()})
        with pytest.raises(TreeError):
            distinguished_node(bad)


class TestMultiplicity:
    def test_cherry_has_two_preimage_nodes(self):
        inner = next(u for u in CHERRY.nodes() if u != CHERRY.root)
        assert multiplicity_m(dualize_at(CHERRY, inner)) == 2

    def test_root_image(self):
        assert multiplicity_m(CHERRY) == 1

    @given(tree_and_node())
    @settings(max_examples=100, deadline=None)
    def test_counts_isomorphic_images(self, pair):
        tree, u = pair
        sigma = dualize_at(tree, u)
        images = Counter(dualize_at(tree, w).code for w in tree.nodes())
        assert multiplicity_m(sigma) == images[sigma.code] >= 1


class TestReRooting:
    @given(tree_and_node(max_entry=0))
    @settings(max_examples=150, deadline=None)
    def test_plain_reroot_is_an_involution(self, pair):
        tree, u = pair
        sigma = dualize_at(tree, u)
        assert reroot_plain(reroot_plain(sigma)).code == sigma.code

    @given(tree_and_node(max_entry=0))
    @settings(max_examples=100, deadline=None)
    def test_hat_reroot_is_an_involution_without_decorations(self, pair):
        tree, u = pair
        sigma = dualize_at(tree, u)
        twice = apply_linear(reroot_hat, reroot_hat(sigma))
        assert twice.coefficients() == single(sigma).coefficients()

    def test_zero_decorations_give_plain_reroot(self):
        inner = next(u for u in I_XI_XI.nodes() if u != I_XI_XI.root)
        sigma = dualize_at(I_XI_XI, inner)
        assert reroot_hat(sigma).coefficients() == {reroot_plain(sigma).code: 1}

    def test_decoration_moves_to_the_old_root_with_sign(self):
        tree = product(plant("t", Z, with_root_dec(XI, (0, 1))), XI)
        inner = next(u for u in tree.nodes() if u != tree.root)
        sigma = dualize_at(tree, inner)
        out = reroot_hat(sigma).coefficients()
        assert sorted(out.values()) == [-1, 1]
        moved = reroot_plain(sigma.replace(node_dec=tuple((0, 1) if v == tree.root else Z for v in range(tree.size))))
        assert out[moved.code] == -1 and out[reroot_plain(sigma).code] == 1

    def test_decorated_root_without_dual_edges_cancels(self):
        assert len(reroot_hat(with_root_dec(XI, (0, 1)))) == 0

    @given(tree_and_node())
    @settings(max_examples=100, deadline=None)
    def test_reroot_keeps_edge_types(self, pair):
        tree, u = pair
        sigma = dualize_at(tree, u)
        phi = reroot_plain(sigma)
        assert sorted(map(str, sigma.edge_type)) == sorted(map(str, phi.edge_type))
        assert all(base_type(t) in ("t", "Xi") for t in phi.edge_type if t)


def test_shift_coefficients_are_rational():
    assert all(isinstance(c, Fraction) for c in shift_expand(CHERRY).at(Fraction(1, 2)).coefficients().values())
