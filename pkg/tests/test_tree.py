import itertools

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.distance import cdist

from cotree.diffusion import build_kernel, build_operator, diffusion_densities
from cotree.exceptions import ParseError, TrivialInputError
from cotree.hyperbolic import embed, pairwise_embedding_distances
from cotree.tree import (
    WEIGHT_FLOOR,
    WeightedBinaryTree,
    decode_tree,
    from_newick,
    subtree_leaf_sets,
    to_newick,
    tree_distance,
    tree_distance_matrix,
    tree_from_merges,
)

from conftest import random_tree


def _cloud(rng, m, dim=2):
    pts = rng.normal(size=(m, dim))
    return cdist(pts, pts)


def _graph(tree):
    g = nx.Graph()
    for v in range(tree.node_count):
        if v != tree.root:
            g.add_edge(v, int(tree.parent[v]), weight=float(tree.edge_weight[v]))
    return g


class TestStructure:
    def test_counts_and_validity(self, rng):
        t = decode_tree(_cloud(rng, 13))
        assert t.node_count == 25 and t.leaf_count == 13
        internal = np.flatnonzero(t.children[:, 0] >= 0)
        assert internal.size == 12
        assert np.all(t.edge_weight[np.arange(25) != t.root] >= WEIGHT_FLOOR)
        nonroot = np.flatnonzero(t.parent >= 0)
        assert np.all(t.node_height[t.parent[nonroot]] > t.node_height[nonroot])
        np.testing.assert_array_equal(np.sort(t.leaf_label[t.leaf_label >= 0]), np.arange(13))

    def test_invalid_trees_rejected(self):
        parent = np.array([2, 2, -1])
        children = np.array([[-1, -1], [-1, -1], [0, 1]])
        height = np.array([0.0, 0.0, 1.0])
        with pytest.raises(ValueError):
            WeightedBinaryTree(parent, children, np.array([1.0, 0.0, 0.0]), height, np.array([0, 1, -1]), 2)
        with pytest.raises(ValueError):
            WeightedBinaryTree(parent, children, np.array([1.0, 1.0, 0.0]), height, np.array([0, 0, -1]), 2)

    def test_two_leaves(self):
        d = np.array([[0.0, 1.3], [1.3, 0.0]])
        t = decode_tree(d, max_scale=2)
        op = build_operator(build_kernel(d))
        emb = embed([diffusion_densities(op, k, clip=True) for k in range(3)])
        dm = pairwise_embedding_distances(emb)[0, 1]
        assert t.node_count == 3
        np.testing.assert_allclose(t.edge_weight[[0, 1]], 0.5 * dm, rtol=1e-15)
        assert tree_distance(t, 0, 1) == pytest.approx(dm, rel=1e-15)

    def test_too_small(self):
        with pytest.raises(TrivialInputError):
            decode_tree(np.zeros((1, 1)))

    def test_two_tight_pairs_are_cherries(self):
        pts = np.array([[0.0, 0.0], [0.05, 0.0], [5.0, 0.0], [5.0, 0.05]])
        t = decode_tree(cdist(pts, pts), max_scale=3)
        sibling = {}
        for v in np.flatnonzero(t.children[:, 0] >= 0):
            a, b = t.children[v]
            if t.leaf_label[a] >= 0 and t.leaf_label[b] >= 0:
                sibling[int(t.leaf_label[a])] = int(t.leaf_label[b])
                sibling[int(t.leaf_label[b])] = int(t.leaf_label[a])
        assert sibling == {0: 1, 1: 0, 2: 3, 3: 2}

    def test_deterministic(self, rng):
        d = _cloud(rng, 20)
        a, b = decode_tree(d), decode_tree(d)
        assert to_newick(a) == to_newick(b)

    def test_ties_resolved_by_index(self):
        # four points at the corners of a square: every side ties
        pts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
        t = decode_tree(cdist(pts, pts), max_scale=1)
        first = t.children[4]
        assert sorted(t.leaf_label[first]) == [0, 1]

    def test_zero_distances_give_a_tree(self):
        t = decode_tree(np.zeros((5, 5)))
        assert t.leaf_count == 5
        assert np.all(tree_distance_matrix(t) >= 0)

    def test_landmark_decode(self, rng):
        t = decode_tree(_cloud(rng, 30), landmark_c=0.6, seed=1)
        assert t.leaf_count == 30


class TestIntervals:
    def test_leaf_root_and_union(self, rng):
        t = random_tree(11, rng)
        iv = subtree_leaf_sets(t)
        assert (iv.start[t.root], iv.stop[t.root]) == (0, 11)
        for v in range(t.node_count):
            if t.children[v, 0] < 0:
                assert iv.stop[v] - iv.start[v] == 1
                assert iv.order[iv.start[v]] == t.leaf_label[v]
            else:
                a, b = t.children[v]
                assert iv.start[v] == iv.start[a] and iv.stop[a] == iv.start[b] and iv.stop[b] == iv.stop[v]
        np.testing.assert_array_equal(iv.order[iv.position], np.arange(11))


class TestDistances:
    @pytest.mark.parametrize("seed", range(5))
    def test_dijkstra_oracle(self, seed):
        rng = np.random.default_rng(seed)
        t = random_tree(8, rng)
        g = _graph(t)
        lengths = dict(nx.all_pairs_dijkstra_path_length(g))
        full = tree_distance_matrix(t)
        for a in range(8):
            for b in range(8):
                ref = lengths[int(t.leaf_node[a])][int(t.leaf_node[b])]
                assert tree_distance(t, a, b) == pytest.approx(ref, abs=1e-12)
                assert full[a, b] == pytest.approx(ref, abs=1e-12)

    def test_identity_and_symmetry(self, rng):
        t = random_tree(9, rng)
        full = tree_distance_matrix(t)
        assert np.all(np.diag(full) == 0)
        assert np.array_equal(full, full.T)
        assert tree_distance(t, 4, 4) == 0.0

    def test_unknown_label(self, rng):
        t = random_tree(4, rng)
        with pytest.raises(KeyError):
            tree_distance(t, 0, 7)

    def test_four_point_condition(self, rng):
        t = decode_tree(_cloud(rng, 12))
        d = tree_distance_matrix(t)
        for i, j, k, l in itertools.combinations(range(12), 4):
            sums = sorted([d[i, j] + d[k, l], d[i, k] + d[j, l], d[i, l] + d[j, k]])
            assert sums[2] - sums[1] <= 1e-9


class TestNewick:
    def test_two_leaf_example(self):
        t = tree_from_merges([(0, 1)], [0.5], 2, leaf_names=["f0", "f1"])
        assert to_newick(t) == "(f0:0.5,f1:0.5);"

    @pytest.mark.parametrize("m", [2, 5, 11, 40])
    def test_round_trip(self, rng, m):
        t = decode_tree(_cloud(rng, m))
        back = from_newick(to_newick(t))
        np.testing.assert_allclose(tree_distance_matrix(back), tree_distance_matrix(t), atol=1e-12, rtol=0)
        assert to_newick(back) == to_newick(t)

    def test_leaves_in_postorder(self, rng):
        t = random_tree(10, rng)
        text = to_newick(t)
        names = [tok.split(":")[0].strip("()") for tok in text.rstrip(";").split(",")]
        assert [int(n) for n in names] == list(t.intervals.order)

    def test_named_round_trip(self, rng):
        names = [f"gene {i}'s" for i in range(6)]
        t = random_tree(6, rng)
        text = to_newick(t, names=names)
        back = from_newick(text, names=names)
        np.testing.assert_allclose(tree_distance_matrix(back), tree_distance_matrix(t), atol=1e-12, rtol=0)
        by_appearance = from_newick(text)
        assert sorted(by_appearance.leaf_names) == sorted(names)

    def test_many_integer_leaves_keep_labels(self, rng):
        # string order of "0".."11" differs from numeric order
        t = random_tree(12, rng)
        back = from_newick(to_newick(t))
        assert back.leaf_names is None
        np.testing.assert_allclose(tree_distance_matrix(back), tree_distance_matrix(t), atol=1e-12, rtol=0)

    @pytest.mark.parametrize(
        "text",
        ["((a:1,b:1):1,c:1)", "((a:1,b:1,c:1):1,d:1);", "((a:1,b:1):1;", "(a:1,a:1);", "(a:x,b:1);", "a:1);"],
    )
    def test_malformed(self, text):
        with pytest.raises(ParseError):
            from_newick(text)

    def test_missing_lengths_floor(self):
        t = from_newick("((a,b),c);")
        assert np.all(t.edge_weight[np.arange(5) != t.root] == WEIGHT_FLOOR)


@settings(max_examples=30, deadline=None)
@given(st.integers(min_value=2, max_value=24), st.integers(0, 2**31 - 1))
def test_decoded_tree_metric_property(m, seed):
    rng = np.random.default_rng(seed)
    t = decode_tree(_cloud(rng, m, 3), max_scale=2)
    d = tree_distance_matrix(t)
    assert np.array_equal(d, d.T)
    assert np.all(np.diag(d) == 0)
    assert np.all(d[~np.eye(m, dtype=bool)] > 0)
    viol = d[:, None, :] - d[:, :, None] - d[None, :, :]
    assert viol.max() <= 1e-9
