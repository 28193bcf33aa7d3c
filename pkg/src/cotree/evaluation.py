"""Evaluation helpers: an exact optimal-transport oracle, kNN accuracy over a
precomputed distance matrix, and the synthetic user/video toy generator.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .exceptions import MarginalError

__all__ = [
    "exact_ot",
    "LabeledDistances",
    "KnnResult",
    "knn_predict",
    "knn_accuracy",
    "VIDEO_HIERARCHY",
    "USER_HIERARCHY",
    "ToySpec",
    "ToyData",
    "generate_toy",
]

logger = logging.getLogger(__name__)


def exact_ot(cost, mu, nu, tol: float = 1e-9) -> float:
    """Exact Kantorovich optimal transport cost by linear programming.

    Intended as a test oracle for small problems (a few dozen bins); solved
    with the HiGHS dual simplex at tight feasibility tolerances.
    """
    c = np.asarray(cost, dtype=np.float64)
    a = np.asarray(mu, dtype=np.float64)
    b = np.asarray(nu, dtype=np.float64)
    p, q = c.shape
    if a.shape != (p,) or b.shape != (q,):
        raise ValueError("marginals do not match the cost matrix")
    if np.any(a < 0) or np.any(b < 0):
        raise MarginalError("marginals must be nonnegative")
    if abs(a.sum() - b.sum()) > tol:
        raise MarginalError(f"marginal masses differ: {a.sum()!r} vs {b.sum()!r}")
    rows = sp.kron(sp.eye(p), np.ones((1, q)))
    cols = sp.kron(np.ones((1, p)), sp.eye(q))
    # one marginal constraint is implied by the others
    a_eq = sp.vstack([rows, cols]).tocsr()[:-1]
    b_eq = np.concatenate([a, b])[:-1]
    res = linprog(
        c.ravel(),
        A_eq=a_eq,
        b_eq=b_eq,
        bounds=(0, None),
        method="highs-ds",
        options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10},
    )
    if res.status != 0:
        raise RuntimeError(f"transport LP failed: {res.message}")
    return float(res.fun)


@dataclass(frozen=True)
class LabeledDistances:
    distances: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.distances)
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise ValueError("distances must be square")
        if len(self.labels) != d.shape[0]:
            raise ValueError("one label is required per row of the distance matrix")


@dataclass
class KnnResult:
    k_values: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    per_trial: np.ndarray = field(repr=False)

    @property
    def best_index(self) -> int:
        return int(np.argmax(self.mean))

    @property
    def best_k(self) -> int:
        return int(self.k_values[self.best_index])

    @property
    def best_mean(self) -> float:
        return float(self.mean[self.best_index])

    @property
    def best_std(self) -> float:
        return float(self.std[self.best_index])


def knn_predict(dist_to_train, train_codes, k, n_classes):
    """Majority vote among the ``k`` nearest training points.

    ``dist_to_train`` has one row per query. Ties in the vote go to the class
    with the smaller summed distance among its voters, then the lower class code.
    """
    d = np.atleast_2d(dist_to_train)
    n_train = d.shape[1]
    k = min(k, n_train)
    idx = np.arange(n_train)
    out = np.empty(d.shape[0], dtype=np.int64)
    for q in range(d.shape[0]):
        nearest = np.lexsort((idx, d[q]))[:k]
        votes = np.bincount(train_codes[nearest], minlength=n_classes)
        summed = np.bincount(train_codes[nearest], weights=d[q, nearest], minlength=n_classes)
        best = np.flatnonzero(votes == votes.max())
        if best.size > 1:
            best = best[summed[best] == summed[best].min()]
        out[q] = best[0]
    return out


def knn_accuracy(
    data: LabeledDistances,
    k_grid=tuple(range(1, 20, 2)),
    train_fraction: float = 0.7,
    trials: int = 5,
    seed: int = 0,
) -> KnnResult:
    """kNN accuracy over repeated random train/test splits of a distance matrix.

    Each trial draws a seeded split; a split whose training part misses a
    class is redrawn (up to 10 attempts, with a warning).
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie in (0, 1)")
    d = np.asarray(data.distances, dtype=np.float64)
    classes, codes = np.unique(np.asarray(data.labels), return_inverse=True)
    if classes.size < 2:
        raise ValueError("at least two classes are required")
    n = d.shape[0]
    n_train = int(round(train_fraction * n))
    if not 0 < n_train < n:
        raise ValueError("split leaves an empty training or test set")
    k_values = np.asarray(list(k_grid), dtype=np.int64)
    rng = np.random.default_rng(seed)
    acc = np.zeros((trials, k_values.size))
    for t in range(trials):
        for attempt in range(10):
            perm = rng.permutation(n)
            train, test = perm[:n_train], perm[n_train:]
            if np.unique(codes[train]).size == classes.size:
                break
            warnings.warn(f"trial {t}: class missing from training split, resampling")
        else:
            raise RuntimeError("could not draw a training split covering every class")
        train = np.sort(train)
        test = np.sort(test)
        sub = d[np.ix_(test, train)]
        for c, k in enumerate(k_values):
            pred = knn_predict(sub, codes[train], int(k), classes.size)
            acc[t, c] = np.mean(pred == codes[test])
    return KnnResult(k_values=k_values, mean=acc.mean(axis=0), std=acc.std(axis=0), per_trial=acc)


VIDEO_HIERARCHY = {
    "fiction": ["action", "drama", "sci-fi"],
    "documentary": ["biography", "historical"],
    "animation": ["family", "comedy"],
}

USER_HIERARCHY = {
    "mobile": ["commute", "late-night"],
    "desktop": ["work-break", "weekend"],
    "smart-tv": ["family-room", "solo"],
}


@dataclass(frozen=True)
class ToySpec:
    """Parameters of the user/video toy generator.

    Every leaf group (a subgenre or a usage context) holds
    ``videos_per_group`` videos or ``users_per_group`` users.
    """

    sigma_root_videos: float = 0.5
    sigma_root_users: float = 0.25
    sigma_child_videos: float = 1.0
    sigma_child_users: float = 0.6
    noise_sigma: float = 0.1
    embed_dim: int = 30
    seed: int = 0
    videos_per_group: int = 8
    users_per_group: int = 10
    video_tree: dict = field(default_factory=lambda: VIDEO_HIERARCHY)
    user_tree: dict = field(default_factory=lambda: USER_HIERARCHY)

    def __post_init__(self):
        sigmas = (
            self.sigma_root_videos,
            self.sigma_root_users,
            self.sigma_child_videos,
            self.sigma_child_users,
        )
        if min(sigmas) <= 0:
            raise ValueError("all tree sigmas must be positive")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be nonnegative")
        if self.embed_dim < 1:
            raise ValueError("embed_dim must be at least 1")


@dataclass
class ToyData:
    """Generated toy matrix with ground truth for the permuted rows and columns.

    ``user_labels[i]`` / ``video_labels[j]`` are first-level categories of
    row ``i`` / column ``j`` of ``X``; ``*_groups`` are the second-level ones.
    ``row_order[i]`` is the unpermuted index of row ``i`` (likewise columns).
    """

    X: np.ndarray
    user_labels: np.ndarray
    video_labels: np.ndarray
    user_groups: np.ndarray
    video_groups: np.ndarray
    row_order: np.ndarray
    col_order: np.ndarray
    user_embeddings: np.ndarray
    video_embeddings: np.ndarray


def _diffuse(hierarchy, per_group, sigma_root, sigma_child, dim, rng):
    root = rng.normal(0.0, sigma_root, dim)
    points, top, sub = [], [], []
    for cat, groups in hierarchy.items():
        cat_vec = rng.normal(root, sigma_child)
        for g in groups:
            g_vec = rng.normal(cat_vec, sigma_child)
            for _ in range(per_group):
                points.append(rng.normal(g_vec, sigma_child))
                top.append(cat)
                sub.append(g)
    return np.asarray(points), np.asarray(top), np.asarray(sub)


def generate_toy(spec: ToySpec | None = None) -> ToyData:
    """Sample a user x video interaction matrix from two latent hierarchies.

    Node embeddings diffuse from the root down to individual users and
    videos; ``Y[i, j] = ||s_i - w_j|| + noise``. ``Y`` is shifted globally to
    be nonnegative and its rows and columns are randomly permuted.
    """
    if spec is None:
        spec = ToySpec()
    rng = np.random.default_rng(spec.seed)
    w, v_top, v_sub = _diffuse(
        spec.video_tree, spec.videos_per_group, spec.sigma_root_videos,
        spec.sigma_child_videos, spec.embed_dim, rng,
    )
    s, u_top, u_sub = _diffuse(
        spec.user_tree, spec.users_per_group, spec.sigma_root_users,
        spec.sigma_child_users, spec.embed_dim, rng,
    )
    y = np.sqrt(((s[:, None, :] - w[None, :, :]) ** 2).sum(axis=2))
    if spec.noise_sigma > 0:
        y = y + rng.normal(0.0, spec.noise_sigma, y.shape)
    y = y - min(float(y.min()), 0.0)
    rows = rng.permutation(y.shape[0])
    cols = rng.permutation(y.shape[1])
    return ToyData(
        X=y[np.ix_(rows, cols)],
        user_labels=u_top[rows],
        video_labels=v_top[cols],
        user_groups=u_sub[rows],
        video_groups=v_sub[cols],
        row_order=rows,
        col_order=cols,
        user_embeddings=s[rows],
        video_embeddings=w[cols],
    )
