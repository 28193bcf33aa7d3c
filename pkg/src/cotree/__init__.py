"""Joint hierarchical representations of the rows and columns of a data matrix.

Trees over one mode define tree-Wasserstein distances between histograms of
the other mode, and the distances in turn decode new trees. The modules are

``diffusion``   Gaussian kernels, diffusion operators and their dyadic powers
``hyperbolic``  multiscale half-space embedding of diffusion densities
``tree``        tree decoding, tree metrics and Newick I/O
``twd``         closed-form tree-Wasserstein distance
``wavelet``     tree Haar bases and the Haar filter
``pipeline``    the alternating iterations
``evaluation``  exact OT oracle, kNN accuracy and the toy generator
``io``          file formats
``cli``         the ``cotree`` command
"""

from .diffusion import build_kernel, build_operator, diffusion_densities, landmark_spectrum
from .evaluation import ToySpec, exact_ot, generate_toy, knn_accuracy
from .exceptions import CotreeError
from .pipeline import (
    IterationConfig,
    check_fixed_point,
    initial_distances,
    run,
    run_alg1,
    run_alg2,
    run_fixed_mode,
    sparsity,
)
from .tree import WeightedBinaryTree, decode_tree, from_newick, to_newick, tree_distance_matrix
from .twd import pairwise_twd, twd
from .wavelet import haar_basis, haar_filter

__version__ = "0.1.0"

__all__ = [
    "CotreeError",
    "IterationConfig",
    "ToySpec",
    "WeightedBinaryTree",
    "build_kernel",
    "build_operator",
    "check_fixed_point",
    "decode_tree",
    "diffusion_densities",
    "exact_ot",
    "from_newick",
    "generate_toy",
    "haar_basis",
    "haar_filter",
    "initial_distances",
    "knn_accuracy",
    "landmark_spectrum",
    "pairwise_twd",
    "run",
    "run_alg1",
    "run_alg2",
    "run_fixed_mode",
    "sparsity",
    "to_newick",
    "tree_distance_matrix",
    "twd",
]
