"""Rooted full binary trees decoded from distance matrices.

:func:`decode_tree` builds a tree over ``m`` points from a distance matrix by
embedding dyadic diffusion densities in a product of Poincare half-spaces and
merging pairs in ascending order of their hyperbolic linkage score.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.spatial.distance import pdist, squareform

from .diffusion import (
    build_kernel,
    build_operator,
    diffusion_densities,
    landmark_densities,
    landmark_spectrum,
    median_scale,
)
from .exceptions import ParseError, TrivialInputError
from .hyperbolic import embed, pairwise_embedding_distances, pairwise_linkage_scores

__all__ = [
    "WeightedBinaryTree",
    "LeafIntervals",
    "WEIGHT_FLOOR",
    "decode_tree",
    "tree_from_merges",
    "tree_distance",
    "tree_distance_matrix",
    "subtree_leaf_sets",
    "to_newick",
    "from_newick",
]

WEIGHT_FLOOR = 1e-12


@dataclass(frozen=True)
class LeafIntervals:
    """Leaves listed in postorder, with each node's leaf set as a half-open interval.

    ``order[start[v]:stop[v]]`` are the labels of the leaves below node ``v``
    and ``position[label]`` is the postorder slot of a leaf label.
    """

    order: np.ndarray
    start: np.ndarray
    stop: np.ndarray
    position: np.ndarray


@dataclass(frozen=True, eq=False)
class WeightedBinaryTree:
    """Rooted full binary tree with positive edge weights.

    Nodes are indexed ``0..N-1``. ``children[v]`` is ``(-1, -1)`` for leaves,
    ``parent[root] == -1`` and ``edge_weight[v]`` is the weight of the edge from
    ``v`` to its parent (zero at the root). ``leaf_label[v]`` maps a leaf node
    to the index of the point it represents and is ``-1`` for internal nodes.
    """

    parent: np.ndarray
    children: np.ndarray
    edge_weight: np.ndarray
    node_height: np.ndarray
    leaf_label: np.ndarray
    root: int
    leaf_names: tuple | None = None

    def __post_init__(self):
        n_nodes = self.parent.shape[0]
        is_leaf = self.children[:, 0] < 0
        m = int(is_leaf.sum())
        if n_nodes != 2 * m - 1:
            raise ValueError(f"{n_nodes} nodes cannot form a full binary tree on {m} leaves")
        if np.any((self.children[:, 0] < 0) != (self.children[:, 1] < 0)):
            raise ValueError("every internal node needs exactly two children")
        labels = np.sort(self.leaf_label[is_leaf])
        if not np.array_equal(labels, np.arange(m)):
            raise ValueError("leaf labels must be a bijection onto 0..m-1")
        if self.parent[self.root] != -1 or int((self.parent < 0).sum()) != 1:
            raise ValueError("tree must have exactly one root")
        nonroot = np.arange(n_nodes) != self.root
        if np.any(self.edge_weight[nonroot] <= 0.0):
            raise ValueError("edge weights must be strictly positive")
        if self.leaf_names is not None and len(self.leaf_names) != m:
            raise ValueError("leaf_names must have one entry per leaf")

    @property
    def node_count(self) -> int:
        return self.parent.shape[0]

    @property
    def leaf_count(self) -> int:
        return (self.node_count + 1) // 2

    @cached_property
    def leaf_node(self) -> np.ndarray:
        """Node index of each leaf label."""
        out = np.empty(self.leaf_count, dtype=np.int64)
        leaves = np.flatnonzero(self.leaf_label >= 0)
        out[self.leaf_label[leaves]] = leaves
        return out

    @cached_property
    def postorder(self) -> np.ndarray:
        """Node indices in postorder (first child before second child)."""
        out = []
        stack = [(self.root, False)]
        while stack:
            v, expanded = stack.pop()
            if expanded or self.children[v, 0] < 0:
                out.append(v)
                continue
            stack.append((v, True))
            stack.append((int(self.children[v, 1]), False))
            stack.append((int(self.children[v, 0]), False))
        return np.asarray(out, dtype=np.int64)

    @cached_property
    def intervals(self) -> LeafIntervals:
        return subtree_leaf_sets(self)

    def weighted_membership(self) -> np.ndarray:
        """``(m, N)`` matrix with ``edge_weight[v]`` where leaf ``label`` lies below ``v``."""
        iv = self.intervals
        m = self.leaf_count
        mem = np.zeros((m, self.node_count))
        for v in range(self.node_count):
            mem[iv.order[iv.start[v] : iv.stop[v]], v] = self.edge_weight[v]
        return mem


def subtree_leaf_sets(tree: WeightedBinaryTree) -> LeafIntervals:
    """Postorder leaf numbering in which every subtree is a contiguous interval."""
    n = tree.node_count
    start = np.zeros(n, dtype=np.int64)
    stop = np.zeros(n, dtype=np.int64)
    order = []
    for v in tree.postorder:
        if tree.children[v, 0] < 0:
            start[v] = len(order)
            order.append(int(tree.leaf_label[v]))
            stop[v] = len(order)
        else:
            a, b = tree.children[v]
            start[v] = start[a]
            stop[v] = stop[b]
    order = np.asarray(order, dtype=np.int64)
    position = np.empty_like(order)
    position[order] = np.arange(order.size)
    return LeafIntervals(order=order, start=start, stop=stop, position=position)


def tree_from_merges(merges, heights, m, weight_floor=WEIGHT_FLOOR, leaf_names=None):
    """Assemble a tree from an agglomeration sequence.

    ``merges[t] = (a, b)`` joins nodes ``a`` and ``b`` (leaves are ``0..m-1``,
    the node created by merge ``t`` is ``m + t``). ``heights[t]`` is the
    requested height of that node; it is raised where needed so that every
    parent sits at least ``weight_floor`` above its children.
    """
    n = 2 * m - 1
    parent = np.full(n, -1, dtype=np.int64)
    children = np.full((n, 2), -1, dtype=np.int64)
    height = np.zeros(n)
    for t, (a, b) in enumerate(merges):
        v = m + t
        children[v] = (a, b)
        parent[a] = parent[b] = v
        height[v] = max(heights[t], height[a] + weight_floor, height[b] + weight_floor)
    weight = np.zeros(n)
    nonroot = parent >= 0
    weight[nonroot] = np.maximum(height[parent[nonroot]] - height[nonroot], weight_floor)
    label = np.full(n, -1, dtype=np.int64)
    label[:m] = np.arange(m)
    return WeightedBinaryTree(
        parent=parent,
        children=children,
        edge_weight=weight,
        node_height=height,
        leaf_label=label,
        root=n - 1,
        leaf_names=None if leaf_names is None else tuple(leaf_names),
    )


def _find(uf, x):
    root = x
    while uf[root] != root:
        root = uf[root]
    while uf[x] != root:
        uf[x], x = root, uf[x]
    return root


def _kernel_scale(d, scale_multiplier):
    med = median_scale(d)
    if med > 0.0:
        return scale_multiplier * med
    # median heuristic degenerates when most pairs coincide
    off = d[np.triu_indices(d.shape[0], k=1)]
    pos = off[off > 0.0]
    if pos.size:
        return scale_multiplier * float(np.median(pos))
    return 1.0


def hyperbolic_embedding(
    distances,
    max_scale: int = 4,
    scale_multiplier: float = 1.0,
    density_normalize: bool = False,
    landmark_c: float | None = None,
    seed: int | None = 0,
):
    """Multi-scale embedding of the points behind ``distances``.

    The densities are clipped onto the simplex before embedding. With
    ``landmark_c`` the densities come from the landmark spectrum instead of
    the full eigendecomposition.
    """
    d = np.asarray(distances, dtype=np.float64)
    scale = _kernel_scale(d, scale_multiplier)
    if landmark_c is None:
        op = build_operator(build_kernel(d, scale=scale), density_normalize=density_normalize)
        dens = [diffusion_densities(op, k, clip=True) for k in range(max_scale + 1)]
    else:
        spec = landmark_spectrum(d, c=landmark_c, seed=seed, scale=scale)
        dens = [landmark_densities(spec, k, clip=True) for k in range(max_scale + 1)]
    return embed(dens)


def decode_tree(
    distances,
    max_scale: int = 4,
    scale_multiplier: float = 1.0,
    density_normalize: bool = False,
    weight_floor: float = WEIGHT_FLOOR,
    landmark_c: float | None = None,
    seed: int | None = 0,
    leaf_names=None,
) -> WeightedBinaryTree:
    """Decode a weighted binary tree from a pairwise distance matrix.

    Parameters
    ----------
    distances : (m, m) array_like
        Symmetric distance matrix with zero diagonal, ``m >= 2``.
    max_scale : int
        Largest dyadic scale ``K``; densities at ``t = 2**-k`` for ``k = 0..K``.
    scale_multiplier : float
        Kernel scale as a multiple of the median pairwise distance.
    density_normalize : bool
        Use the density-normalized kernel.
    weight_floor : float
        Smallest edge weight.
    landmark_c : float, optional
        Landmark exponent; ``ceil(m ** landmark_c)`` landmarks are used.
    seed : int, optional
        Landmark selection seed.

    Returns
    -------
    WeightedBinaryTree
        Leaf ``j`` carries label ``j``. Each internal node sits at half the
        product-manifold distance of the pair that triggered its merge.
    """
    d = np.asarray(distances, dtype=np.float64)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise ValueError("distances must be a square matrix")
    m = d.shape[0]
    if m < 2:
        raise TrivialInputError("a tree needs at least two leaves")
    emb = hyperbolic_embedding(d, max_scale, scale_multiplier, density_normalize, landmark_c, seed)
    geo = pairwise_embedding_distances(emb)
    score = pairwise_linkage_scores(emb)

    iu, ju = np.triu_indices(m, k=1)
    order = np.lexsort((ju, iu, score[iu, ju]))
    uf = list(range(m))
    top = list(range(m))
    merges, heights = [], []
    for p in order:
        i, j = int(iu[p]), int(ju[p])
        ri, rj = _find(uf, i), _find(uf, j)
        if ri == rj:
            continue
        merges.append((top[ri], top[rj]))
        heights.append(0.5 * geo[i, j])
        uf[rj] = ri
        top[ri] = m + len(merges) - 1
        if len(merges) == m - 1:
            break
    return tree_from_merges(merges, heights, m, weight_floor, leaf_names)


def tree_distance(tree: WeightedBinaryTree, leaf_a: int, leaf_b: int) -> float:
    """Sum of edge weights on the path between two leaf labels."""
    m = tree.leaf_count
    for lab in (leaf_a, leaf_b):
        if not 0 <= lab < m:
            raise KeyError(f"unknown leaf label {lab}")
    a, b = int(tree.leaf_node[leaf_a]), int(tree.leaf_node[leaf_b])
    iv = tree.intervals
    pa, pb = iv.position[leaf_a], iv.position[leaf_b]
    total = 0.0
    # climb each side until the current node's interval contains the other leaf
    while not iv.start[a] <= pb < iv.stop[a]:
        total += tree.edge_weight[a]
        a = int(tree.parent[a])
    while not iv.start[b] <= pa < iv.stop[b]:
        total += tree.edge_weight[b]
        b = int(tree.parent[b])
    return float(total)


def tree_distance_matrix(tree: WeightedBinaryTree) -> np.ndarray:
    """All pairwise leaf distances, indexed by leaf label."""
    return squareform(pdist(tree.weighted_membership(), "cityblock"))


def _fmt(x):
    return "%.17g" % x


def to_newick(tree: WeightedBinaryTree, names=None) -> str:
    """Newick text with branch lengths; leaves appear in postorder.

    ``names`` (indexed by leaf label) defaults to ``tree.leaf_names`` and then
    to the decimal labels.
    """
    if names is None:
        names = tree.leaf_names
    if names is None:
        names = [str(i) for i in range(tree.leaf_count)]
    text = {}
    for v in tree.postorder:
        if tree.children[v, 0] < 0:
            s = _quote(str(names[tree.leaf_label[v]]))
        else:
            a, b = tree.children[v]
            s = "(" + text.pop(a) + "," + text.pop(b) + ")"
        if v != tree.root:
            s += ":" + _fmt(tree.edge_weight[v])
        text[v] = s
    return text[tree.root] + ";"


_PLAIN = re.compile(r"^[^\s(),:;'\[\]]+$")


def _quote(name):
    if _PLAIN.match(name):
        return name
    return "'" + name.replace("'", "''") + "'"


_TOKEN = re.compile(r"\s*(?:(\()|(\))|(,)|(:)|(;)|'((?:[^']|'')*)'|([^\s(),:;']+))")


def from_newick(text: str, names=None, weight_floor: float = WEIGHT_FLOOR) -> WeightedBinaryTree:
    """Parse a rooted binary Newick tree with branch lengths.

    Leaf names are mapped to labels through ``names`` when given. Otherwise,
    if the names are exactly ``"0".."m-1"`` they are used as labels directly,
    and failing that leaves are labelled in order of appearance. Missing
    branch lengths default to ``weight_floor``.
    """
    tokens = []
    pos = 0
    text = text.strip()
    while pos < len(text):
        mt = _TOKEN.match(text, pos)
        if mt is None or mt.end() == pos:
            raise ParseError(f"unexpected character at offset {pos}")
        pos = mt.end()
        kind = mt.lastindex
        val = mt.group(kind)
        if kind == 6:
            val = val.replace("''", "'")
        tokens.append((kind, val))
    if not tokens or tokens[-1][0] != 5:
        raise ParseError("Newick text must end with ';'")

    parent, kids, weight, leaf_name = [], [], [], []

    def new_node():
        parent.append(-1)
        kids.append([])
        weight.append(None)
        leaf_name.append(None)
        return len(parent) - 1

    stack = []
    current = None
    i = 0
    ntok = len(tokens) - 1
    expect_label = True
    while i < ntok:
        kind, val = tokens[i]
        if kind == 1:
            v = new_node()
            if stack:
                parent[v] = stack[-1]
                kids[stack[-1]].append(v)
            stack.append(v)
            expect_label = True
        elif kind == 2:
            if not stack:
                raise ParseError("unbalanced ')'")
            current = stack.pop()
            expect_label = False
        elif kind == 3:
            if not stack:
                raise ParseError("',' outside parentheses")
            expect_label = True
        elif kind == 4:
            if current is None or i + 1 >= ntok or tokens[i + 1][0] not in (6, 7):
                raise ParseError("':' must follow a node and precede a number")
            try:
                weight[current] = float(tokens[i + 1][1])
            except ValueError:
                raise ParseError(f"bad branch length {tokens[i + 1][1]!r}") from None
            i += 1
        else:
            if expect_label:
                v = new_node()
                if stack:
                    parent[v] = stack[-1]
                    kids[stack[-1]].append(v)
                leaf_name[v] = val
                current = v
                expect_label = False
            # labels on internal nodes are ignored
        i += 1
    if stack:
        raise ParseError("unbalanced '('")

    n = len(parent)
    roots = [v for v in range(n) if parent[v] == -1]
    if len(roots) != 1:
        raise ParseError("Newick text must describe a single tree")
    for v in range(n):
        if kids[v] and len(kids[v]) != 2:
            raise ParseError(f"node with {len(kids[v])} children; only binary trees are supported")
    leaves = [v for v in range(n) if not kids[v]]
    found = [leaf_name[v] if leaf_name[v] is not None else "" for v in leaves]
    m = len(leaves)
    if names is not None:
        lookup = {str(nm): i for i, nm in enumerate(names)}
        try:
            labels = [lookup[nm] for nm in found]
        except KeyError as exc:
            raise ParseError(f"leaf {exc.args[0]!r} not among the given names") from None
        out_names = tuple(str(nm) for nm in names)
    elif set(found) == {str(i) for i in range(m)}:
        labels = [int(nm) for nm in found]
        out_names = None
    else:
        labels = list(range(m))
        out_names = tuple(found)
    if len(set(found)) != m:
        raise ParseError("leaf names must be unique")
    if names is not None and len(names) != m:
        raise ParseError(f"{len(names)} names given for a tree with {m} leaves")
    if len(set(labels)) != m:
        raise ParseError("names must be unique")

    parent_a = np.asarray(parent, dtype=np.int64)
    children = np.full((n, 2), -1, dtype=np.int64)
    for v in range(n):
        if kids[v]:
            children[v] = kids[v]
    w = np.array([weight_floor if x is None else x for x in weight], dtype=np.float64)
    root = roots[0]
    w[root] = 0.0
    label = np.full(n, -1, dtype=np.int64)
    label[leaves] = labels
    height = np.zeros(n)
    # children are created after their parents, so reverse index order is bottom-up
    for v in range(n - 1, -1, -1):
        if kids[v]:
            height[v] = max(height[c] + w[c] for c in kids[v])
    return WeightedBinaryTree(
        parent=parent_a,
        children=children,
        edge_weight=w,
        node_height=height,
        leaf_label=label,
        root=root,
        leaf_names=out_names,
    )
