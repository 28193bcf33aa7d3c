"""Gaussian affinity kernels, diffusion operators and dyadic diffusion densities.

All functions operate on a precomputed distance matrix. The diffusion
operator is column-stochastic, ``P = K D^{-1}``, so column ``j`` of any power
of ``P`` is the density obtained by diffusing a unit mass placed at ``j``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import (
    DegenerateScaleError,
    InsufficientLandmarksError,
    SingularDegreeError,
)

__all__ = [
    "AffinityKernel",
    "DiffusionOperator",
    "LandmarkSpectrum",
    "median_scale",
    "build_kernel",
    "build_operator",
    "diffusion_densities",
    "landmark_spectrum",
    "landmark_densities",
]


@dataclass(frozen=True)
class AffinityKernel:
    matrix: np.ndarray
    scale: float


@dataclass(frozen=True)
class DiffusionOperator:
    """Column-stochastic diffusion operator with the spectrum of its symmetric conjugate.

    ``eigenvalues`` are sorted in descending order and ``eigenvectors`` hold the
    matching orthonormal eigenvectors of ``D^{-1/2} K D^{-1/2}`` in columns.
    """

    transition: np.ndarray
    degrees: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def size(self) -> int:
        return self.transition.shape[0]


@dataclass(frozen=True)
class LandmarkSpectrum:
    """Low-rank spectral approximation built from a landmark subset.

    ``left_vectors`` (n x n'), ``singular_values`` (n') and ``right_vectors``
    (n' x n') are the SVD of ``D^{-1/2} K_hat`` where ``K_hat`` is the
    affinity between all points and the landmarks.
    """

    landmark_count: int
    landmarks: np.ndarray
    cross_kernel: np.ndarray
    degrees: np.ndarray
    left_vectors: np.ndarray
    singular_values: np.ndarray
    right_vectors: np.ndarray
    scale: float

    @property
    def eigenvalues(self) -> np.ndarray:
        """Approximate eigenvalues of the normalized landmark-affinity operator."""
        return self.singular_values**2


def _check_distances(distances):
    d = np.asarray(distances, dtype=np.float64)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise ValueError(f"distance matrix must be square, got shape {d.shape}")
    if not np.all(np.isfinite(d)):
        raise ValueError("distance matrix contains non-finite entries")
    return d


def median_scale(distances) -> float:
    """Median of the strictly upper-triangular entries of a distance matrix."""
    d = _check_distances(distances)
    iu = np.triu_indices(d.shape[0], k=1)
    if iu[0].size == 0:
        return 0.0
    return float(np.median(d[iu]))


def build_kernel(distances, scale_multiplier: float = 1.0, scale: float | None = None) -> AffinityKernel:
    """Gaussian affinity ``exp(-d**2 / eps)`` with ``eps = scale_multiplier * median(d)``.

    Parameters
    ----------
    distances : (m, m) array_like
        Symmetric distance matrix with zero diagonal.
    scale_multiplier : float
        Multiplier applied to the median pairwise distance.
    scale : float, optional
        Explicit kernel scale. Overrides the median heuristic when given.

    Raises
    ------
    DegenerateScaleError
        If the median of the off-diagonal distances is zero and no explicit
        scale is supplied.
    """
    if scale_multiplier <= 0:
        raise ValueError("scale_multiplier must be positive")
    d = _check_distances(distances)
    if scale is None:
        med = median_scale(d)
        if med <= 0.0:
            raise DegenerateScaleError(
                "median pairwise distance is zero; kernel scale is degenerate"
            )
        scale = scale_multiplier * med
    elif scale <= 0:
        raise ValueError("scale must be positive")
    k = np.exp(-(d**2) / scale)
    k = 0.5 * (k + k.T)
    np.fill_diagonal(k, 1.0)
    return AffinityKernel(matrix=k, scale=float(scale))


def _degrees(k):
    deg = k.sum(axis=1)
    if np.any(deg <= 0.0):
        bad = int(np.flatnonzero(deg <= 0.0)[0])
        raise SingularDegreeError(f"kernel row {bad} sums to zero")
    return deg


def build_operator(kernel: AffinityKernel, density_normalize: bool = False) -> DiffusionOperator:
    """Column-stochastic operator ``P = K D^{-1}`` and its symmetric spectrum.

    With ``density_normalize`` the kernel is first replaced by
    ``D^{-1} K D^{-1}`` to reduce the influence of sampling density.
    """
    k = np.asarray(kernel.matrix, dtype=np.float64)
    deg = _degrees(k)
    if density_normalize:
        k = k / np.outer(deg, deg)
        deg = _degrees(k)
    transition = k / deg[np.newaxis, :]
    inv_sqrt = 1.0 / np.sqrt(deg)
    sym = k * np.outer(inv_sqrt, inv_sqrt)
    sym = 0.5 * (sym + sym.T)
    evals, evecs = np.linalg.eigh(sym)
    order = np.argsort(evals)[::-1]
    return DiffusionOperator(
        transition=transition,
        degrees=deg,
        eigenvalues=evals[order],
        eigenvectors=evecs[:, order],
    )


def _spectral_power(degrees, eigenvalues, eigenvectors, t, clip):
    lam = np.clip(eigenvalues, 0.0, None) ** t
    sq = np.sqrt(degrees)
    out = (sq[:, None] * eigenvectors * lam[None, :]) @ (eigenvectors.T / sq[None, :])
    if clip:
        np.clip(out, 0.0, None, out=out)
    out /= out.sum(axis=0, keepdims=True)
    return out


def diffusion_densities(op: DiffusionOperator, k: int, clip: bool = False) -> np.ndarray:
    """Return ``P ** (2 ** -k)``; column ``j`` is the density diffused from ``j``.

    Negative eigenvalues are clamped to zero before the fractional power and
    each column is rescaled to sum to one.

    A fractional power of a positive matrix is not entrywise positive in
    general, so small negative entries can remain. Pass ``clip=True`` to zero
    them before the column rescaling, which yields proper probability
    vectors at the cost of the exact semigroup property.
    """
    if k < 0:
        raise ValueError("k must be nonnegative")
    return _spectral_power(op.degrees, op.eigenvalues, op.eigenvectors, 2.0 ** (-k), clip)


def landmark_spectrum(
    distances,
    scale_multiplier: float = 1.0,
    c: float = 0.1,
    seed: int | None = 0,
    landmark_count: int | None = None,
    scale: float | None = None,
) -> LandmarkSpectrum:
    """Landmark approximation of the diffusion spectrum.

    ``ceil(n ** c)`` landmarks are drawn uniformly without replacement. The
    cross affinity ``K_hat`` (n x n') is normalized by
    ``D_hat = diag(K_hat K_hat^T 1)`` and decomposed by a thin SVD, whose
    squared singular values approximate the eigenvalues of
    ``D_hat^{-1/2} K_hat K_hat^T D_hat^{-1/2}``.
    """
    d = _check_distances(distances)
    n = d.shape[0]
    if n < 4:
        raise ValueError("landmark approximation needs at least 4 points")
    if landmark_count is None:
        if not 0.0 < c < 1.0:
            raise ValueError("c must lie in (0, 1)")
        # guard against n**c landing a hair above an exact integer
        landmark_count = min(n, math.ceil(n**c - 1e-9))
    if landmark_count < 2:
        raise InsufficientLandmarksError(
            f"{landmark_count} landmark(s) selected; at least 2 are required"
        )
    if landmark_count > n:
        raise ValueError("landmark_count cannot exceed the number of points")
    if scale is None:
        med = median_scale(d)
        if med <= 0.0:
            raise DegenerateScaleError("median pairwise distance is zero")
        scale = scale_multiplier * med
    rng = np.random.default_rng(seed)
    if landmark_count == n:
        landmarks = np.arange(n)
    else:
        landmarks = np.sort(rng.choice(n, size=landmark_count, replace=False))
    cross = np.exp(-(d[:, landmarks] ** 2) / scale)
    deg = cross @ (cross.T @ np.ones(n))
    if np.any(deg <= 0.0):
        raise SingularDegreeError("landmark degree vanished")
    u, s, vt = np.linalg.svd(cross / np.sqrt(deg)[:, None], full_matrices=False)
    return LandmarkSpectrum(
        landmark_count=int(landmark_count),
        landmarks=landmarks,
        cross_kernel=cross,
        degrees=deg,
        left_vectors=u,
        singular_values=s,
        right_vectors=vt,
        scale=float(scale),
    )


def landmark_densities(spec: LandmarkSpectrum, k: int, clip: bool = False) -> np.ndarray:
    """Dyadic diffusion densities reconstructed from a landmark spectrum.

    The normalized landmark-affinity operator stands in for the diffusion
    operator, so the result is ``D^{1/2} U S^(2 t) U^T D^{-1/2}`` with
    ``t = 2 ** -k`` and ``S`` the singular values.
    """
    if k < 0:
        raise ValueError("k must be nonnegative")
    return _spectral_power(
        spec.degrees, spec.eigenvalues, spec.left_vectors, 2.0 ** (-k), clip
    )
