import logging
from dataclasses import replace

import numpy as np
import pytest
from scipy.spatial.distance import cdist

from cotree.exceptions import TrivialInputError, ZeroMassError
from cotree.pipeline import (
    IterationConfig,
    _advance,
    check_fixed_point,
    initial_distances,
    relative_change,
    run,
    run_alg1,
    run_alg2,
    run_fixed_mode,
    sparsity,
    trajectory,
)
from cotree.tree import decode_tree, to_newick
from cotree.twd import TwdConfig, pairwise_twd

FILTERED = IterationConfig(threshold_r=0.95, threshold_c=0.95)


@pytest.fixture(scope="module")
def toy_inputs():
    from cotree.evaluation import ToySpec, generate_toy

    x = generate_toy(ToySpec(seed=0)).X
    return (x, *initial_distances(x))


def _assert_metric(w):
    assert np.array_equal(w, w.T)
    assert np.all(np.diag(w) == 0)
    assert np.all(w >= 0)


class TestHelpers:
    def test_relative_change(self):
        a = np.array([[0.0, 2.0], [2.0, 0.0]])
        assert relative_change(1.5 * a, a) == pytest.approx(0.5)
        assert relative_change(np.zeros(2), np.zeros(2)) == 0.0
        assert relative_change(np.ones(2), np.zeros(2)) == float("inf")

    def test_cosine_initial_distances(self, rng):
        x = rng.uniform(size=(6, 4))
        mr, mc = initial_distances(x)
        xn = x / np.linalg.norm(x, axis=1, keepdims=True)
        np.testing.assert_allclose(mr, np.clip(1 - xn @ xn.T, 0, None) * (1 - np.eye(6)), atol=1e-15)
        assert mc.shape == (4, 4)
        _assert_metric(mr)

    def test_euclidean_initial_distances(self, rng):
        x = rng.uniform(size=(5, 3))
        mr, mc = initial_distances(x, "euclidean")
        np.testing.assert_allclose(mr, cdist(x, x), atol=1e-15)
        np.testing.assert_allclose(mc, cdist(x.T, x.T), atol=1e-15)

    def test_zero_norm_rejected(self):
        with pytest.raises(ZeroMassError):
            initial_distances(np.array([[1.0, 0.0], [0.0, 0.0]]))
        with pytest.raises(ValueError):
            initial_distances(np.ones((2, 2)), "manhattan")

    def test_sparsity_zero_matrix(self, rng):
        from conftest import random_tree

        assert sparsity(np.zeros((4, 5)), random_tree(4, rng), random_tree(5, rng)) == (0.0, 0.0)


class TestConfig:
    @pytest.mark.parametrize(
        "kwargs",
        [
            {"max_iterations": 0},
            {"tolerance": 0.0},
            {"gamma_r": -1.0},
            {"threshold_c": 0.0},
            {"threshold_r": 1.01},
            {"landmark_c": 1.0},
            {"scale_multiplier": 0.0},
            {"max_scale": -1},
        ],
    )
    def test_rejects(self, kwargs):
        with pytest.raises(ValueError):
            IterationConfig(**kwargs)

    def test_thresholds_required(self, toy_inputs):
        with pytest.raises(ValueError, match="threshold"):
            run_alg2(*toy_inputs, IterationConfig())

    def test_as_dict_round_trip(self):
        cfg = IterationConfig(threshold_r=0.5, seed=3)
        assert IterationConfig(**cfg.as_dict()) == cfg


class TestInputs:
    def test_identical_rows(self):
        x = np.tile([1.0, 2.0, 3.0, 4.0], (5, 1))
        mr, mc = initial_distances(x, "euclidean")
        for state in trajectory("alg1", x, mr, mc, IterationConfig(max_iterations=3)):
            np.testing.assert_array_equal(state.sample_twd, np.zeros((5, 5)))

    def test_degenerate_sizes(self):
        with pytest.raises(TrivialInputError):
            run_alg1(np.ones((1, 4)), np.zeros((1, 1)), np.zeros((4, 4)))

    def test_bad_inputs(self, rng):
        x = rng.uniform(size=(4, 3))
        mr, mc = initial_distances(x)
        with pytest.raises(ValueError, match="nonnegative"):
            run_alg1(-x, mr, mc)
        z = x.copy()
        z[2] = 0
        with pytest.raises(ZeroMassError):
            run_alg1(z, mr, mc)
        with pytest.raises(ValueError, match="M_c"):
            run_alg1(x, mr, mr)

    def test_unknown_algorithm(self, toy_inputs):
        with pytest.raises(ValueError):
            run("alg3", *toy_inputs, FILTERED)


class TestToyRuns:
    @pytest.mark.parametrize("algorithm", ["alg1", "alg2", "fixed-mode"])
    def test_converges_with_fixed_point(self, toy_inputs, algorithm):
        cfg = IterationConfig() if algorithm == "alg1" else FILTERED
        states = list(trajectory(algorithm, *toy_inputs, cfg))
        final = states[-1]
        assert final.converged and final.iteration <= 25
        assert [s.iteration for s in states] == list(range(final.iteration + 1))
        for s in states:
            _assert_metric(s.sample_twd)
            _assert_metric(s.feature_twd)
        res = check_fixed_point(final, toy_inputs[0], cfg)
        assert max(res) < cfg.tolerance
        assert len(final.history) == final.iteration + 1

    def test_run_matches_trajectory(self, toy_inputs):
        a = run("alg2", *toy_inputs, FILTERED)
        b = list(trajectory("alg2", *toy_inputs, FILTERED))[-1]
        np.testing.assert_array_equal(a.sample_twd, b.sample_twd)
        assert a.status == "converged"

    def test_deterministic(self, toy_inputs):
        a = run_alg1(*toy_inputs)
        b = run_alg1(*toy_inputs)
        np.testing.assert_array_equal(a.sample_twd, b.sample_twd)
        assert [(r.change_r, r.l1_c) for r in a.history[1:]] == [(r.change_r, r.l1_c) for r in b.history[1:]]

    def test_truncated_run(self, toy_inputs, caplog):
        cfg = IterationConfig(max_iterations=1)
        with caplog.at_level(logging.WARNING):
            state = run_alg1(*toy_inputs, cfg)
        assert state.status == "max_iterations"
        assert "without reaching tolerance" in caplog.text
        assert max(check_fixed_point(state, toy_inputs[0], cfg)) >= cfg.tolerance

    def test_fixed_mode_sample_tree_frozen(self, toy_inputs):
        x, mr, mc = toy_inputs
        ref = decode_tree(mr, max_scale=1, scale_multiplier=5.0)
        for s in trajectory("fixed-mode", x, mr, mc, FILTERED):
            assert to_newick(s.reference_sample_tree) == to_newick(ref)

    def test_fixed_mode_first_update_matches_alg2(self, toy_inputs):
        x, mr, mc = toy_inputs
        w = run_alg2(x, mr, mc, FILTERED).sample_twd
        a = list(trajectory("alg2", x, w, mc, FILTERED))
        b = list(trajectory("fixed-mode", x, w, mc, FILTERED))
        np.testing.assert_array_equal(a[1].feature_twd, b[1].feature_twd)
        np.testing.assert_array_equal(a[1].sample_twd, b[1].sample_twd)

    def test_fixed_mode_converges_from_prior(self):
        from cotree.evaluation import ToySpec, generate_toy

        toy = generate_toy(ToySpec(seed=1))
        # prior sample distances from the true user hierarchy
        same_group = toy.user_groups[:, None] == toy.user_groups[None, :]
        same_top = toy.user_labels[:, None] == toy.user_labels[None, :]
        prior = 3.0 - 1.0 * same_top - 1.0 * same_group
        np.fill_diagonal(prior, 0.0)
        _, mc = initial_distances(toy.X)
        state = run_fixed_mode(toy.X, prior, mc, FILTERED)
        assert state.converged

    def test_zero_mass_after_filter_names_iteration(self, toy_inputs):
        x, mr, mc = toy_inputs
        start = next(trajectory("alg2", x, mr, mc, FILTERED))
        bad = start.filtered_samples.copy()
        bad[7] = -1.0
        with pytest.raises(ZeroMassError) as info:
            _advance(replace(start, filtered_samples=bad), x, FILTERED)
        assert info.value.iteration == 1

    def test_gamma_zero_note(self, toy_inputs, caplog):
        cfg = IterationConfig(gamma_r=0.0, max_iterations=1)
        with caplog.at_level(logging.INFO, logger="cotree.pipeline"):
            run_alg1(*toy_inputs, cfg)
        assert "gamma_r=0" in caplog.text


def test_identity_filter_reproduces_unfiltered_updates(toy_inputs):
    x, _, _ = toy_inputs
    x = x / x.sum(axis=1, keepdims=True)
    mr, mc = initial_distances(x)
    cfg = IterationConfig(threshold_r=1.0, threshold_c=1.0)
    hc = x.T / x.T.sum(axis=1, keepdims=True)
    dec = lambda w: decode_tree(w, max_scale=cfg.max_scale, scale_multiplier=cfg.scale_multiplier)  # noqa: E731
    w_r, w_c = mr, mc
    for state in trajectory("alg2", x, mr, mc, cfg):
        if state.iteration:
            t_r, t_c = dec(w_r), dec(w_c)
            w_r = pairwise_twd(x, t_c, TwdConfig(cfg.gamma_r))
            w_c = pairwise_twd(hc, t_r, TwdConfig(cfg.gamma_c))
        assert np.abs(state.sample_twd - w_r).max() <= 1e-10
        assert np.abs(state.feature_twd - w_c).max() <= 1e-10
