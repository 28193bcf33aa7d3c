"""
Filtered and unfiltered iterations side by side
===============================================

Run the plain alternating iteration and the wavelet-filtered one on three
toy seeds and compare convergence, classification and the L1 Haar norm of
the data under the learned trees.
"""

# %%
from cotree.evaluation import LabeledDistances, ToySpec, generate_toy, knn_accuracy
from cotree.pipeline import IterationConfig, initial_distances, run_alg1, run_alg2

filtered = IterationConfig(threshold_r=0.95, threshold_c=0.95)

# %%
# ``l1_r``/``l1_c`` are the mean L1 Haar coefficient norms of the unit-mass
# rows and columns under the current trees: lower means the trees explain
# the data with fewer wavelets.
for seed in range(3):
    toy = generate_toy(ToySpec(seed=seed))
    M_r, M_c = initial_distances(toy.X)
    for name, state in (("alg1", run_alg1(toy.X, M_r, M_c)), ("alg2", run_alg2(toy.X, M_r, M_c, filtered))):
        first, last = state.history[0], state.history[-1]
        acc = knn_accuracy(LabeledDistances(state.sample_twd, toy.user_labels), seed=0).best_mean
        print(f"seed {seed} {name}: {state.iteration:2d} it, acc {acc:.3f}, "
              f"l1_r {first.l1_r:.4f} -> {last.l1_r:.4f}, l1_c {first.l1_c:.4f} -> {last.l1_c:.4f}")

# %%
# The filtered run lowers both norms from its own starting trees on every
# seed. It does not end sparser than the unfiltered run, though: the final
# norms differ by well under one percent and are mostly slightly higher.
