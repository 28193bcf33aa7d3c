"""Multi-scale Poincare half-space embedding of diffusion densities.

Point ``j`` at scale ``k`` is embedded as ``y_j^k = [sqrt(mu_j^k), 2**(k/2 - 2)]``
in the half-space of dimension ``m + 1``. Distances live on the product of the
``K + 1`` half-spaces with the l1 product metric.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .exceptions import InvalidDensityError

__all__ = [
    "MultiscaleEmbedding",
    "embed",
    "embedding_distance",
    "linkage_score",
    "pairwise_embedding_distances",
    "pairwise_linkage_scores",
]

_BLOCK = 4096


def scale_height(k):
    """Last half-space coordinate used at scale ``k``."""
    return 2.0 ** (np.asarray(k, dtype=np.float64) / 2.0 - 2.0)


@dataclass(frozen=True)
class MultiscaleEmbedding:
    """Square-root densities stacked over scales.

    ``roots[k, :, j]`` holds the first ``m`` coordinates of ``y_j^k``; the last
    coordinate is implied by ``k`` and returned by :meth:`point`.
    """

    roots: np.ndarray

    @property
    def max_scale(self) -> int:
        return self.roots.shape[0] - 1

    @property
    def size(self) -> int:
        return self.roots.shape[2]

    def point(self, j: int, k: int) -> np.ndarray:
        """Full ``(m + 1)``-vector ``y_j^k``."""
        return np.append(self.roots[k, :, j], scale_height(k))


def embed(densities) -> MultiscaleEmbedding:
    """Embed per-scale column-stochastic density matrices.

    Parameters
    ----------
    densities : sequence of (m, m) arrays
        ``densities[k][:, j]`` is the density diffused from ``j`` at scale ``k``;
        one matrix per scale ``k = 0..K``.
    """
    stack = np.stack([np.asarray(d, dtype=np.float64) for d in densities])
    if stack.ndim != 3 or stack.shape[1] != stack.shape[2]:
        raise ValueError("densities must be a sequence of square matrices")
    if np.any(stack < 0.0):
        k, i, j = np.argwhere(stack < 0.0)[0]
        raise InvalidDensityError(
            f"negative density {stack[k, i, j]:.3g} at scale {k}, entry ({i}, {j})"
        )
    return MultiscaleEmbedding(roots=np.sqrt(stack))


def _scale_terms(emb, j, jp):
    diff = emb.roots[:, :, j] - emb.roots[:, :, jp]
    return np.einsum("ki,ki->k", diff, diff)


def embedding_distance(emb: MultiscaleEmbedding, j: int, jp: int) -> float:
    """Product-manifold geodesic distance between points ``j`` and ``jp``."""
    sq = _scale_terms(emb, j, jp)
    k = np.arange(emb.max_scale + 1)
    return float(np.sum(2.0 * np.arcsinh(2.0 ** (-k / 2.0 + 1.0) * np.sqrt(sq))))


def linkage_score(emb: MultiscaleEmbedding, j: int, jp: int) -> float:
    """Geometric mean over scales of the geodesic-midpoint projection radius.

    Computed in the log domain; small scores mark points that merge early.
    """
    sq = _scale_terms(emb, j, jp)
    h = scale_height(np.arange(emb.max_scale + 1))
    return float(np.exp(np.mean(0.5 * np.log(0.25 * sq + h**2))))


def _sq_dists(a):
    # squared euclidean distances between the columns of a, row blocks for large m
    pts = np.ascontiguousarray(a.T)
    m = pts.shape[0]
    if m <= _BLOCK:
        return cdist(pts, pts, "sqeuclidean")
    out = np.empty((m, m))
    for start in range(0, m, _BLOCK):
        stop = min(start + _BLOCK, m)
        out[start:stop] = cdist(pts[start:stop], pts, "sqeuclidean")
    return out


def pairwise_embedding_distances(emb: MultiscaleEmbedding) -> np.ndarray:
    """Dense matrix of :func:`embedding_distance` over all pairs."""
    m = emb.size
    out = np.zeros((m, m))
    for k in range(emb.max_scale + 1):
        sq = _sq_dists(emb.roots[k])
        out += 2.0 * np.arcsinh(2.0 ** (-k / 2.0 + 1.0) * np.sqrt(sq))
    return 0.5 * (out + out.T)


def pairwise_linkage_scores(emb: MultiscaleEmbedding) -> np.ndarray:
    """Dense matrix of :func:`linkage_score` over all pairs."""
    m = emb.size
    logs = np.zeros((m, m))
    for k in range(emb.max_scale + 1):
        sq = _sq_dists(emb.roots[k])
        logs += 0.5 * np.log(0.25 * sq + scale_height(k) ** 2)
    logs /= emb.max_scale + 1
    logs = 0.5 * (logs + logs.T)
    return np.exp(logs)
