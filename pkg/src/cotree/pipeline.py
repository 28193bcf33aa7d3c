"""Alternating tree refinement over the two modes of a data matrix.

Rows (samples) and columns (features) are each turned into histograms. A tree
over one mode is the ground metric for the TWD between histograms of the other
mode; the resulting distance matrices in turn decode new trees. Three
schedules are provided:

``alg1``
    plain alternation of TWD computation and tree decoding;
``alg2``
    the same with a Haar wavelet filter applied to the data before every
    TWD computation;
``fixed-mode``
    ``alg2`` with the sample tree held at the tree of the supplied sample
    distances.
"""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.spatial.distance import cdist

from .exceptions import TrivialInputError, ZeroMassError
from .tree import WeightedBinaryTree, decode_tree
from .twd import TwdConfig, pairwise_twd
from .wavelet import expand, haar_basis, haar_filter, l1_haar_norm, normalize_histograms

__all__ = [
    "IterationConfig",
    "IterationRecord",
    "IterationState",
    "ALGORITHMS",
    "run",
    "run_alg1",
    "run_alg2",
    "run_fixed_mode",
    "check_fixed_point",
    "trajectory",
    "relative_change",
    "initial_distances",
    "sparsity",
]

logger = logging.getLogger(__name__)

ALGORITHMS = ("alg1", "alg2", "fixed-mode")


@dataclass(frozen=True)
class IterationConfig:
    """Hyperparameters of the alternating scheme.

    ``threshold_r`` / ``threshold_c`` are fractions of the Haar coefficient
    mass measured on the input data under the initial trees; the filter keeps
    the fewest basis vectors reaching that much mass. They are required by
    ``alg2`` and ``fixed-mode`` only.
    """

    gamma_r: float = 0.01
    gamma_c: float = 0.01
    max_scale: int = 1
    scale_multiplier: float = 5.0
    threshold_r: float | None = None
    threshold_c: float | None = None
    max_iterations: int = 25
    tolerance: float = 1e-6
    seed: int = 0
    landmark_c: float | None = None
    density_normalize: bool = False
    regularizer_epsilon: float = 1e-6

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if self.gamma_r < 0 or self.gamma_c < 0:
            raise ValueError("gamma_r and gamma_c must be nonnegative")
        if self.max_scale < 0:
            raise ValueError("max_scale must be nonnegative")
        if self.scale_multiplier <= 0:
            raise ValueError("scale_multiplier must be positive")
        for name in ("threshold_r", "threshold_c"):
            val = getattr(self, name)
            if val is not None and not 0.0 < val <= 1.0:
                raise ValueError(f"{name} must lie in (0, 1]")
        if self.landmark_c is not None and not 0.0 < self.landmark_c < 1.0:
            raise ValueError("landmark_c must lie in (0, 1)")

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    change_r: float
    change_c: float
    l1_r: float
    l1_c: float
    wall_ms: float

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class IterationState:
    """Current iterate of one run plus its history.

    ``sample_twd`` / ``feature_twd`` are the latest distance matrices and
    ``sample_tree`` / ``feature_tree`` the trees decoded from them (for
    ``fixed-mode`` the sample tree used by the updates stays the tree of the
    supplied sample distances and is kept in ``reference_sample_tree``).
    ``filtered_samples`` / ``filtered_features`` are the filtered data (the
    raw data and its transpose for ``alg1``).
    """

    algorithm: str
    iteration: int
    sample_twd: np.ndarray
    feature_twd: np.ndarray
    sample_tree: WeightedBinaryTree
    feature_tree: WeightedBinaryTree
    filtered_samples: np.ndarray
    filtered_features: np.ndarray
    mass_r: float | None = None
    mass_c: float | None = None
    reference_sample_tree: WeightedBinaryTree | None = None
    history: list = field(default_factory=list)
    converged: bool = False

    @property
    def status(self) -> str:
        return "converged" if self.converged else "max_iterations"


def relative_change(new, old) -> float:
    """``||new - old||_F / ||old||_F`` (0 when both vanish, inf when only ``old`` does)."""
    den = np.linalg.norm(old)
    num = np.linalg.norm(np.asarray(new) - np.asarray(old))
    if den == 0.0:
        return 0.0 if num == 0.0 else float("inf")
    return float(num / den)


def _metric_matrix(vectors, metric):
    if metric == "cosine":
        norms = np.linalg.norm(vectors, axis=1)
        zero = np.flatnonzero(norms == 0)
        if zero.size:
            raise ZeroMassError(f"vector {zero[0]} has zero norm; cosine distance undefined", row=int(zero[0]))
        d = cdist(vectors, vectors, "cosine")
    elif metric == "euclidean":
        d = cdist(vectors, vectors, "euclidean")
    else:
        raise ValueError(f"unknown metric {metric!r}")
    d = 0.5 * (d + d.T)
    np.clip(d, 0.0, None, out=d)
    np.fill_diagonal(d, 0.0)
    return d


def initial_distances(X, metric: str = "cosine"):
    """Initial sample and feature distance matrices ``(M_r, M_c)``.

    ``metric`` is ``"cosine"`` (one minus cosine similarity) or ``"euclidean"``.
    """
    x = np.asarray(X, dtype=np.float64)
    return _metric_matrix(x, metric), _metric_matrix(x.T, metric)


def _check_inputs(X, M_r, M_c):
    x = np.asarray(X, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("X must be a 2-D matrix")
    n, m = x.shape
    if n < 2 or m < 2:
        raise TrivialInputError(f"need at least 2 rows and 2 columns, got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("X contains non-finite values")
    if np.any(x < 0):
        raise ValueError("X must be nonnegative")
    zr = np.flatnonzero(x.sum(axis=1) == 0)
    if zr.size:
        raise ZeroMassError(f"row {zr[0]} of X is all zero", row=int(zr[0]))
    zc = np.flatnonzero(x.sum(axis=0) == 0)
    if zc.size:
        raise ZeroMassError(f"column {zc[0]} of X is all zero", row=int(zc[0]))
    mr = np.asarray(M_r, dtype=np.float64)
    mc = np.asarray(M_c, dtype=np.float64)
    if mr.shape != (n, n):
        raise ValueError(f"M_r must be {n}x{n}, got {mr.shape}")
    if mc.shape != (m, m):
        raise ValueError(f"M_c must be {m}x{m}, got {mc.shape}")
    return x, mr, mc


def _decode(w, config):
    return decode_tree(
        w,
        max_scale=config.max_scale,
        scale_multiplier=config.scale_multiplier,
        density_normalize=config.density_normalize,
        landmark_c=config.landmark_c,
        seed=config.seed,
    )


def _phi(hist, tree, gamma, config):
    return pairwise_twd(hist, tree, TwdConfig(gamma, config.regularizer_epsilon))


def _unit_rows(x):
    x = np.asarray(x, dtype=np.float64)
    if np.any(x < 0):
        raise ValueError("sparsity is defined for nonnegative data only")
    mass = x.sum(axis=1, keepdims=True)
    return np.divide(x, mass, out=np.zeros_like(x), where=mass > 0)


def sparsity(X, sample_tree: WeightedBinaryTree, feature_tree: WeightedBinaryTree) -> tuple[float, float]:
    """Mean L1 Haar norm of the unit-mass rows and columns of ``X``.

    Rows are expanded in the basis of ``feature_tree`` and columns in the
    basis of ``sample_tree``. All-zero rows or columns count as zero. The
    unfiltered data are used so that runs and algorithms are comparable.
    """
    x = np.atleast_2d(np.asarray(X, dtype=np.float64))
    return (
        l1_haar_norm(_unit_rows(x), haar_basis(feature_tree)),
        l1_haar_norm(_unit_rows(x.T), haar_basis(sample_tree)),
    )


def _note_gamma(config):
    if config.gamma_r == 0 or config.gamma_c == 0:
        logger.info(
            "running with gamma_r=%g, gamma_c=%g; the limit-point guarantee needs both > 0",
            config.gamma_r,
            config.gamma_c,
        )


def _filter_step(state, config, feature_ref, sample_ref, iteration):
    try:
        xf, _ = haar_filter(state.filtered_samples, feature_ref, config.threshold_c, state.mass_c)
        zf, _ = haar_filter(state.filtered_features, sample_ref, config.threshold_r, state.mass_r)
    except ZeroMassError as exc:  # pragma: no cover - re-raised with context
        raise ZeroMassError(str(exc), row=exc.row, iteration=iteration) from exc
    try:
        hr = normalize_histograms(xf)
    except ZeroMassError as exc:
        raise ZeroMassError(
            f"iteration {iteration}: filtered sample {exc.row} has zero mass",
            row=exc.row,
            iteration=iteration,
        ) from exc
    try:
        hc = normalize_histograms(zf)
    except ZeroMassError as exc:
        raise ZeroMassError(
            f"iteration {iteration}: filtered feature {exc.row} has zero mass",
            row=exc.row,
            iteration=iteration,
        ) from exc
    return xf, zf, hr, hc


def _advance(state: IterationState, x, config: IterationConfig) -> IterationState:
    """One update of the alternating scheme; returns a new state."""
    t0 = time.perf_counter()
    nxt = state.iteration + 1
    sample_ref = state.reference_sample_tree or state.sample_tree
    if state.algorithm == "alg1":
        xf, zf = state.filtered_samples, state.filtered_features
        hr = normalize_histograms(xf)
        hc = normalize_histograms(zf)
    else:
        xf, zf, hr, hc = _filter_step(state, config, state.feature_tree, sample_ref, nxt)
    w_r = _phi(hr, state.feature_tree, config.gamma_r, config)
    w_c = _phi(hc, sample_ref, config.gamma_c, config)
    t_r = _decode(w_r, config)
    t_c = _decode(w_c, config)
    l1_r, l1_c = sparsity(x, t_r, t_c)
    rec = IterationRecord(
        iteration=nxt,
        change_r=relative_change(w_r, state.sample_twd),
        change_c=relative_change(w_c, state.feature_twd),
        l1_r=l1_r,
        l1_c=l1_c,
        wall_ms=1e3 * (time.perf_counter() - t0),
    )
    return replace(
        state,
        iteration=nxt,
        sample_twd=w_r,
        feature_twd=w_c,
        sample_tree=t_r,
        feature_tree=t_c,
        filtered_samples=xf,
        filtered_features=zf,
        history=state.history + [rec],
        converged=False,
    )


def _steps(state, x, config):
    yield state
    while state.iteration < config.max_iterations:
        state = _advance(state, x, config)
        rec = state.history[-1]
        if max(rec.change_r, rec.change_c) < config.tolerance:
            state.converged = True
        yield state
        if state.converged:
            return


def _iterate(state, x, config):
    for state in _steps(state, x, config):
        pass
    if not state.converged:
        logger.warning(
            "%s stopped after %d iterations without reaching tolerance %g",
            state.algorithm,
            state.iteration,
            config.tolerance,
        )
    return state


def run_alg1(X, M_r, M_c, config: IterationConfig | None = None) -> IterationState:
    """Alternating TWD / tree refinement without filtering.

    Iteration 0 computes the TWDs of the normalized rows and columns on the
    trees decoded from ``M_c`` and ``M_r``; every later iteration decodes
    trees from the previous TWDs. Stops once the relative Frobenius change
    of both distance matrices drops below ``config.tolerance``.
    """
    config = config or IterationConfig()
    x, state = _alg1_start(X, M_r, M_c, config)
    return _iterate(state, x, config)


def _alg1_start(X, M_r, M_c, config):
    x, mr, mc = _check_inputs(X, M_r, M_c)
    _note_gamma(config)
    t0 = time.perf_counter()
    hr = normalize_histograms(x)
    hc = normalize_histograms(x.T)
    w_r = _phi(hr, _decode(mc, config), config.gamma_r, config)
    w_c = _phi(hc, _decode(mr, config), config.gamma_c, config)
    t_r, t_c = _decode(w_r, config), _decode(w_c, config)
    l1_r, l1_c = sparsity(x, t_r, t_c)
    rec = IterationRecord(0, float("nan"), float("nan"), l1_r, l1_c, 1e3 * (time.perf_counter() - t0))
    state = IterationState(
        algorithm="alg1",
        iteration=0,
        sample_twd=w_r,
        feature_twd=w_c,
        sample_tree=t_r,
        feature_tree=t_c,
        filtered_samples=x,
        filtered_features=x.T.copy(),
        history=[rec],
    )
    return x, state


def _filtered_start(algorithm, X, M_r, M_c, config):
    if config.threshold_r is None or config.threshold_c is None:
        raise ValueError(f"{algorithm} requires threshold_r and threshold_c")
    x, mr, mc = _check_inputs(X, M_r, M_c)
    _note_gamma(config)
    t0 = time.perf_counter()
    t_r, t_c = _decode(mr, config), _decode(mc, config)
    mass_c = float(np.abs(expand(x, haar_basis(t_c))).sum())
    mass_r = float(np.abs(expand(x.T, haar_basis(t_r))).sum())
    l1_r, l1_c = sparsity(x, t_r, t_c)
    rec = IterationRecord(0, float("nan"), float("nan"), l1_r, l1_c, 1e3 * (time.perf_counter() - t0))
    state = IterationState(
        algorithm=algorithm,
        iteration=0,
        sample_twd=mr.copy(),
        feature_twd=mc.copy(),
        sample_tree=t_r,
        feature_tree=t_c,
        filtered_samples=x,
        filtered_features=x.T.copy(),
        mass_r=mass_r,
        mass_c=mass_c,
        reference_sample_tree=t_r if algorithm == "fixed-mode" else None,
        history=[rec],
    )
    return x, state


def run_alg2(X, M_r, M_c, config: IterationConfig) -> IterationState:
    """Alternating refinement with tree Haar wavelet filtering.

    Iteration 0 holds ``M_r`` / ``M_c`` themselves. Each update filters the
    current samples with the feature-tree basis and the current features
    with the sample-tree basis, renormalizes the filtered rows into
    histograms and recomputes both TWDs on the trees of the previous
    iteration.
    """
    x, state = _filtered_start("alg2", X, M_r, M_c, config)
    return _iterate(state, x, config)


def run_fixed_mode(X, M_r, M_c, config: IterationConfig) -> IterationState:
    """:func:`run_alg2` with the sample tree fixed to the tree of ``M_r``.

    Features are always filtered with, and measured on, the tree decoded
    from ``M_r``; only the feature tree evolves.
    """
    x, state = _filtered_start("fixed-mode", X, M_r, M_c, config)
    return _iterate(state, x, config)


def run(algorithm, X, M_r, M_c, config: IterationConfig) -> IterationState:
    """Dispatch to :func:`run_alg1`, :func:`run_alg2` or :func:`run_fixed_mode`."""
    if algorithm == "alg1":
        return run_alg1(X, M_r, M_c, config)
    if algorithm == "alg2":
        return run_alg2(X, M_r, M_c, config)
    if algorithm == "fixed-mode":
        return run_fixed_mode(X, M_r, M_c, config)
    raise ValueError(f"unknown algorithm {algorithm!r}; expected one of {ALGORITHMS}")


def trajectory(algorithm, X, M_r, M_c, config: IterationConfig):
    """Yield the state after every iteration of a run, starting with iteration 0.

    The last state yielded is the one :func:`run` would return.
    """
    if algorithm == "alg1":
        x, state = _alg1_start(X, M_r, M_c, config)
    elif algorithm in ("alg2", "fixed-mode"):
        x, state = _filtered_start(algorithm, X, M_r, M_c, config)
    else:
        raise ValueError(f"unknown algorithm {algorithm!r}; expected one of {ALGORITHMS}")
    yield from _steps(state, x, config)


def check_fixed_point(state: IterationState, X, config: IterationConfig) -> tuple[float, float]:
    """Relative change of each distance matrix under one more update.

    Values below ``config.tolerance`` certify an empirical fixed point.
    """
    x = np.asarray(X, dtype=np.float64)
    nxt = _advance(state, x, config)
    return nxt.history[-1].change_r, nxt.history[-1].change_c
