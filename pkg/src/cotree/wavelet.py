"""Haar bases induced by binary trees and the tree wavelet filter.

Each internal node contributes one zero-mean wavelet that is constant on the
leaves of either child, positive on the first child and negative on the
second. Together with the constant vector these form an orthonormal basis of
functions on the leaves.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import EmptySelectionError, ShapeError, ZeroMassError
from .tree import WeightedBinaryTree

__all__ = [
    "HaarBasis",
    "FilterSelection",
    "haar_basis",
    "expand",
    "select_filter",
    "project",
    "haar_filter",
    "normalize_histograms",
    "l1_haar_norm",
]


@dataclass(frozen=True, eq=False)
class HaarBasis:
    """Orthonormal tree Haar basis.

    ``vectors[:, c]`` is basis vector ``c`` indexed by leaf label. Column 0 is
    the constant vector (``levels[0] == 0``, ``nodes[0] == -1``); column
    ``c > 0`` is the wavelet of internal node ``nodes[c]`` at depth
    ``levels[c]`` (root level 1).
    """

    vectors: np.ndarray
    levels: np.ndarray
    nodes: np.ndarray
    source_tree: WeightedBinaryTree

    @property
    def size(self) -> int:
        return self.vectors.shape[0]


@dataclass(frozen=True)
class FilterSelection:
    """Basis columns kept by the filter, in descending order of L1 coefficient mass."""

    kept_columns: np.ndarray
    cumulative_mass: float
    threshold_fraction: float
    total_mass: float
    reference_mass: float


def _depths(tree):
    depth = np.zeros(tree.node_count, dtype=np.int64)
    for v in tree.postorder[::-1]:
        p = tree.parent[v]
        if p >= 0:
            depth[v] = depth[p] + 1
    return depth


def haar_basis(tree: WeightedBinaryTree) -> HaarBasis:
    """Haar basis of a full binary tree, wavelets ordered by level then leaf position."""
    m = tree.leaf_count
    iv = tree.intervals
    internal = np.flatnonzero(tree.children[:, 0] >= 0)
    depth = _depths(tree)
    internal = internal[np.lexsort((iv.start[internal], depth[internal]))]

    vectors = np.zeros((m, m))
    vectors[:, 0] = 1.0 / np.sqrt(m)
    for c, v in enumerate(internal, start=1):
        a, b = tree.children[v]
        n1 = iv.stop[a] - iv.start[a]
        n2 = iv.stop[b] - iv.start[b]
        n = n1 + n2
        vectors[iv.order[iv.start[a] : iv.stop[a]], c] = np.sqrt(n2 / (n1 * n))
        vectors[iv.order[iv.start[b] : iv.stop[b]], c] = -np.sqrt(n1 / (n2 * n))
    levels = np.concatenate([[0], depth[internal] + 1])
    nodes = np.concatenate([[-1], internal])
    return HaarBasis(vectors=vectors, levels=levels, nodes=nodes, source_tree=tree)


def _check_width(signals, basis):
    x = np.atleast_2d(np.asarray(signals, dtype=np.float64))
    if x.shape[1] != basis.size:
        raise ShapeError(f"signals have width {x.shape[1]}, basis has size {basis.size}")
    return x


def expand(signals, basis: HaarBasis) -> np.ndarray:
    """Coefficients of each row of ``signals`` in the basis, ``signals @ B``."""
    return _check_width(signals, basis) @ basis.vectors


def select_filter(coefficients, threshold_fraction: float, reference_mass: float | None = None) -> FilterSelection:
    """Smallest set of columns holding a given fraction of the L1 coefficient mass.

    Columns are ranked by ``sum_i |coefficients[i, j]|`` (ties go to the
    lower column index) and kept until the running total reaches
    ``threshold_fraction * reference_mass``. The reference defaults to the
    total mass of ``coefficients``. A fraction of 1, or a target that
    cannot be reached, keeps every column with nonzero mass.
    """
    if not 0.0 < threshold_fraction <= 1.0:
        raise ValueError("threshold_fraction must lie in (0, 1]")
    alpha = np.atleast_2d(np.asarray(coefficients, dtype=np.float64))
    mass = np.abs(alpha).sum(axis=0)
    total = float(mass.sum())
    if total <= 0.0:
        raise EmptySelectionError("all coefficients are zero; nothing to select")
    ref = total if reference_mass is None else float(reference_mass)
    order = np.argsort(-mass, kind="stable")
    cum = np.cumsum(mass[order])
    nonzero = int(np.count_nonzero(mass))
    target = threshold_fraction * ref
    if threshold_fraction >= 1.0:
        count = nonzero
    else:
        count = int(np.searchsorted(cum, target, side="left")) + 1
        count = min(count, nonzero)
    kept = order[:count]
    return FilterSelection(
        kept_columns=kept,
        cumulative_mass=float(cum[count - 1]),
        threshold_fraction=float(threshold_fraction),
        total_mass=total,
        reference_mass=ref,
    )


def project(signals, basis: HaarBasis, kept_columns) -> np.ndarray:
    """Orthogonal projection of each row onto the span of the kept basis columns."""
    x = _check_width(signals, basis)
    sub = basis.vectors[:, np.asarray(kept_columns, dtype=np.int64)]
    return (x @ sub) @ sub.T


def haar_filter(signals, tree: WeightedBinaryTree, threshold_fraction: float, reference_mass: float | None = None):
    """Filter the rows of ``signals`` with the Haar basis of ``tree``.

    Returns the filtered matrix together with the selection that produced it.
    """
    basis = haar_basis(tree)
    coef = expand(signals, basis)
    sel = select_filter(coef, threshold_fraction, reference_mass)
    sub = basis.vectors[:, sel.kept_columns]
    return (coef[:, sel.kept_columns]) @ sub.T, sel


def normalize_histograms(signals, min_mass: float = 1e-12) -> np.ndarray:
    """Turn each row into a histogram.

    Rows with a negative minimum are shifted by that minimum, then every row
    is divided by its L1 norm.

    Raises
    ------
    ZeroMassError
        If a row has mass below ``min_mass`` after the shift.
    """
    x = np.array(np.atleast_2d(signals), dtype=np.float64)
    low = x.min(axis=1)
    neg = low < 0.0
    x[neg] -= low[neg, None]
    mass = np.abs(x).sum(axis=1)
    bad = np.flatnonzero(mass < min_mass)
    if bad.size:
        raise ZeroMassError(f"row {bad[0]} has zero mass and cannot be normalized", row=int(bad[0]))
    return x / mass[:, None]


def l1_haar_norm(signals, basis: HaarBasis) -> float:
    """Mean over rows of the L1 norm of the Haar coefficients."""
    coef = expand(signals, basis)
    return float(np.abs(coef).sum(axis=1).mean())
