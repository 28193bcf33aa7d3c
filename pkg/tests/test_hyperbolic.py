import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cotree.diffusion import build_kernel, build_operator, diffusion_densities
from cotree.exceptions import InvalidDensityError
from cotree.hyperbolic import (
    embed,
    embedding_distance,
    linkage_score,
    pairwise_embedding_distances,
    pairwise_linkage_scores,
    scale_height,
)

from conftest import random_simplex


def _random_embedding(rng, m, K):
    pts = rng.normal(size=(m, 2))
    d = np.sqrt(((pts[:, None] - pts[None]) ** 2).sum(-1))
    op = build_operator(build_kernel(d))
    return embed([diffusion_densities(op, k, clip=True) for k in range(K + 1)])


def _scalar_distance(emb, j, jp):
    total = 0.0
    for k in range(emb.max_scale + 1):
        a, b = emb.point(j, k), emb.point(jp, k)
        h = math.sqrt(sum((x - y) ** 2 for x, y in zip(a, b)))
        total += 2.0 * math.asinh(2.0 ** (-k / 2 + 1) * h)
    return total


def test_scale_height_values():
    assert scale_height(0) == 0.25
    assert scale_height(4) == 1.0
    assert scale_height(2) == 0.5


def test_delta_density():
    m = 5
    emb = embed([np.eye(m)] * 3)
    for k in range(3):
        y = emb.point(0, k)
        np.testing.assert_array_equal(y[:m], np.eye(m)[0])
        assert y[m] == 2.0 ** (k / 2 - 2)


def test_unit_norm_roots(rng):
    emb = _random_embedding(rng, 6, 3)
    norms = (emb.roots**2).sum(axis=1)
    np.testing.assert_allclose(norms, 1.0, atol=1e-8)
    assert emb.max_scale == 3 and emb.size == 6


def test_negative_density_rejected():
    bad = np.array([[1.1, 0.0], [-0.1, 1.0]])
    with pytest.raises(InvalidDensityError):
        embed([bad])


def test_single_scale_distance():
    mu = np.array([[0.7, 0.2], [0.3, 0.8]])
    emb = embed([mu])
    h = np.linalg.norm(np.sqrt(mu[:, 0]) - np.sqrt(mu[:, 1]))
    assert embedding_distance(emb, 0, 1) == pytest.approx(2 * math.asinh(2 * h), rel=1e-15)


def test_distance_matches_scalar_recomputation(rng):
    emb = _random_embedding(rng, 6, 4)
    full = pairwise_embedding_distances(emb)
    for j in range(6):
        for jp in range(6):
            ref = _scalar_distance(emb, j, jp)
            assert abs(embedding_distance(emb, j, jp) - ref) <= 1e-12
            assert abs(full[j, jp] - ref) <= 1e-12


def test_self_distance_and_symmetry(rng):
    emb = _random_embedding(rng, 7, 2)
    full = pairwise_embedding_distances(emb)
    assert np.all(np.diag(full) == 0)
    assert np.array_equal(full, full.T)


def test_distance_monotone_in_scales(rng):
    emb = _random_embedding(rng, 6, 5)
    for K in range(5):
        shorter = embed(list(emb.roots[: K + 1] ** 2))
        longer = embed(list(emb.roots[: K + 2] ** 2))
        assert np.all(pairwise_embedding_distances(longer) >= pairwise_embedding_distances(shorter))


@pytest.mark.parametrize("K", [0, 1, 3, 7, 19])
def test_self_linkage(rng, K):
    emb = embed([random_simplex(4, rng, size=4).T for _ in range(K + 1)])
    expected = 2.0 ** (K / 4 - 2)
    assert linkage_score(emb, 2, 2) == pytest.approx(expected, rel=1e-14)
    np.testing.assert_allclose(np.diag(pairwise_linkage_scores(emb)), expected, rtol=1e-14)


def test_linkage_log_domain_oracle(rng):
    emb = _random_embedding(rng, 5, 2)
    j, jp = 1, 3
    logs = []
    for k in range(3):
        diff = 0.5 * (emb.roots[k, :, j] - emb.roots[k, :, jp])
        logs.append(math.log(math.hypot(np.linalg.norm(diff), 2.0 ** (k / 2 - 2))))
    ref = math.exp(sum(logs) / 3)
    assert abs(linkage_score(emb, j, jp) - ref) <= 1e-12
    assert abs(pairwise_linkage_scores(emb)[j, jp] - ref) <= 1e-12


def test_linkage_matches_direct_product(rng):
    K = 19
    emb = embed([random_simplex(6, rng, size=6).T for _ in range(K + 1)])
    scores = pairwise_linkage_scores(emb)
    for j, jp in [(0, 1), (2, 5), (3, 4)]:
        prod = 1.0
        for k in range(K + 1):
            diff = 0.5 * (emb.roots[k, :, j] - emb.roots[k, :, jp])
            prod *= math.sqrt(diff @ diff + scale_height(k) ** 2)
        assert scores[j, jp] == pytest.approx(prod ** (1 / (K + 1)), rel=1e-10)


def test_linkage_lower_bound_k0(rng):
    emb = embed([random_simplex(8, rng, size=8).T])
    assert np.all(pairwise_linkage_scores(emb) >= 0.25)


@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=2, max_value=9), st.integers(min_value=0, max_value=4), st.integers(0, 2**31 - 1))
def test_pairwise_symmetry_property(m, K, seed):
    rng = np.random.default_rng(seed)
    emb = embed([random_simplex(m, rng, size=m).T for _ in range(K + 1)])
    d = pairwise_embedding_distances(emb)
    a = pairwise_linkage_scores(emb)
    assert np.array_equal(d, d.T) and np.array_equal(a, a.T)
    assert np.all(d >= 0)
