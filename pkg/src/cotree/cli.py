"""Command-line front end.

Subcommands::

    cotree run            learn sample and feature trees from a data matrix
    cotree gen-toy        write the synthetic user/video matrix and its labels
    cotree eval-knn       kNN accuracy of a distance matrix against labels
    cotree eval-sparsity  L1 Haar norms of a data matrix under two trees
    cotree export         decode a tree from a distance matrix, convert matrix formats

Exit status: 0 on success (``run``: converged), 3 when ``run`` stops at the
iteration limit, 2 on usage or input errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from contextlib import nullcontext
from pathlib import Path


from . import io
from .evaluation import LabeledDistances, ToySpec, generate_toy, knn_accuracy
from .exceptions import CotreeError
from .pipeline import ALGORITHMS, IterationConfig, check_fixed_point, initial_distances, run, sparsity
from .tree import decode_tree

__all__ = ["main", "build_parser", "cmd_run", "cmd_gen_toy", "cmd_eval_knn", "cmd_eval_sparsity", "cmd_export"]

THREADS_ENV = "COTREE_THREADS"

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_MAX_ITER = 3

logger = logging.getLogger("cotree")


class UsageError(Exception):
    """A flag combination or value that is rejected before any computation."""


def _default_threads():
    raw = os.environ.get(THREADS_ENV, "0")
    try:
        val = int(raw)
    except ValueError:
        val = -1
    if val < 0:
        raise UsageError(f"environment variable {THREADS_ENV}={raw!r} is not a nonnegative integer")
    return val


def _add_data_flags(p, required=True):
    p.add_argument("--input", type=Path, required=required, help="data matrix file")
    p.add_argument("--format", choices=("dense", "sparse"), default="dense",
                   help="dense CSV/TSV or MatrixMarket coordinate (default: dense)")
    p.add_argument("--header", action="store_true", help="dense input has a header row of column names")
    p.add_argument("--row-names", action="store_true", help="dense input has a first column of row names")


def _add_tree_flags(p):
    p.add_argument("--max-scale", type=int, default=IterationConfig.max_scale,
                   help="largest dyadic scale index K (default: %(default)s)")
    p.add_argument("--scale-multiplier", type=float, default=IterationConfig.scale_multiplier,
                   help="kernel scale as a multiple of the median distance (default: %(default)s)")
    p.add_argument("--landmark-c", type=float, default=None,
                   help="use n**c landmarks for the diffusion spectrum (default: exact)")
    p.add_argument("--density-normalize", action="store_true", help="density-normalize the kernel")
    p.add_argument("--seed", type=int, default=0, help="random seed (default: 0)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cotree", description="Joint tree learning for the rows and columns of a matrix.")
    parser.add_argument("--threads", type=int, default=None,
                        help=f"BLAS threads, 0 = library default (default: ${THREADS_ENV} or 0)")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("run", help="run alg1, alg2 or fixed-mode on a data matrix")
    _add_data_flags(p)
    p.add_argument("--output-dir", type=Path, required=True)
    p.add_argument("--algorithm", choices=ALGORITHMS, default="alg1")
    p.add_argument("--gamma-r", type=float, default=IterationConfig.gamma_r)
    p.add_argument("--gamma-c", type=float, default=IterationConfig.gamma_c)
    p.add_argument("--threshold-r", type=float, default=None, help="sample filter threshold in (0, 1]")
    p.add_argument("--threshold-c", type=float, default=None, help="feature filter threshold in (0, 1]")
    p.add_argument("--max-iterations", type=int, default=IterationConfig.max_iterations)
    p.add_argument("--tolerance", type=float, default=IterationConfig.tolerance)
    p.add_argument("--regularizer-epsilon", type=float, default=IterationConfig.regularizer_epsilon)
    _add_tree_flags(p)
    for mode, what in (("r", "sample"), ("c", "feature")):
        p.add_argument(f"--initial-metric-{mode}", choices=("cosine", "euclidean", "provided"),
                       default="cosine", help=f"initial {what} distances (default: cosine)")
        p.add_argument(f"--initial-{mode}", type=Path, default=None,
                       help=f"{what} distance CSV, required with --initial-metric-{mode} provided")
    p.add_argument("--timing", action="store_true",
                   help="record wall times in the history log (makes it run-dependent)")

    p = sub.add_parser("gen-toy", help="write the synthetic user/video dataset")
    p.add_argument("--output-dir", type=Path, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise-sigma", type=float, default=ToySpec.noise_sigma)
    p.add_argument("--embed-dim", type=int, default=ToySpec.embed_dim)
    p.add_argument("--videos-per-group", type=int, default=ToySpec.videos_per_group)
    p.add_argument("--users-per-group", type=int, default=ToySpec.users_per_group)
    p.add_argument("--sparse", action="store_true", help="also write toy.mtx")

    p = sub.add_parser("eval-knn", help="kNN accuracy of a distance matrix")
    p.add_argument("--distances", type=Path, required=True)
    p.add_argument("--labels", type=Path, required=True, help="one label per line")
    p.add_argument("--k", type=int, nargs="+", default=list(range(1, 20, 2)))
    p.add_argument("--train-fraction", type=float, default=0.7)
    p.add_argument("--trials", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("eval-sparsity", help="L1 Haar norms of a data matrix under two trees")
    _add_data_flags(p)
    p.add_argument("--sample-tree", type=Path, required=True, help="Newick tree over the rows")
    p.add_argument("--feature-tree", type=Path, required=True, help="Newick tree over the columns")

    p = sub.add_parser("export", help="decode a tree from distances and/or convert a data matrix")
    p.add_argument("--distances", type=Path, default=None)
    p.add_argument("--names", type=Path, default=None, help="leaf names, one per line")
    p.add_argument("--tree-out", type=Path, default=None)
    _add_tree_flags(p)
    _add_data_flags(p, required=False)
    p.add_argument("--dense-out", type=Path, default=None)
    p.add_argument("--sparse-out", type=Path, default=None)
    return parser


def _read_data(args):
    if args.format == "sparse":
        if args.header or args.row_names:
            raise UsageError("--header and --row-names apply to dense input only")
        return io.read_sparse(args.input)
    return io.read_dense(args.input, has_header=args.header, has_row_names=args.row_names)


def _iteration_config(args):
    try:
        return IterationConfig(
            gamma_r=args.gamma_r,
            gamma_c=args.gamma_c,
            max_scale=args.max_scale,
            scale_multiplier=args.scale_multiplier,
            threshold_r=args.threshold_r,
            threshold_c=args.threshold_c,
            max_iterations=args.max_iterations,
            tolerance=args.tolerance,
            seed=args.seed,
            landmark_c=args.landmark_c,
            density_normalize=args.density_normalize,
            regularizer_epsilon=args.regularizer_epsilon,
        )
    except ValueError as exc:
        raise UsageError(_flagify(str(exc))) from None


def _flagify(message):
    # config errors start with a field name; report the matching flag instead
    head, _, rest = message.partition(" ")
    if head in IterationConfig.__dataclass_fields__:
        return f"--{head.replace('_', '-')} {rest}"
    return message


def _validate_run(args):
    if args.algorithm in ("alg2", "fixed-mode"):
        for flag in ("threshold_r", "threshold_c"):
            if getattr(args, flag) is None:
                raise UsageError(f"--{flag.replace('_', '-')} is required with --algorithm {args.algorithm}")
    else:
        for flag in ("threshold_r", "threshold_c"):
            if getattr(args, flag) is not None:
                raise UsageError(f"--{flag.replace('_', '-')} only applies to alg2 and fixed-mode")
    for mode in ("r", "c"):
        metric = getattr(args, f"initial_metric_{mode}")
        path = getattr(args, f"initial_{mode}")
        if metric == "provided" and path is None:
            raise UsageError(f"--initial-{mode} is required with --initial-metric-{mode} provided")
        if metric != "provided" and path is not None:
            raise UsageError(f"--initial-{mode} needs --initial-metric-{mode} provided")
    return _iteration_config(args)


def _initial(x, args):
    out = []
    for k, mode in enumerate(("r", "c")):
        metric = getattr(args, f"initial_metric_{mode}")
        if metric == "provided":
            out.append(io.read_distance_matrix(getattr(args, f"initial_{mode}")))
        else:
            out.append(initial_distances(x, metric)[k])
    return out


def cmd_run(args) -> int:
    """Run the selected algorithm and write its distance matrices, trees and history.

    Files written to ``--output-dir``: ``sample_twd.csv``, ``feature_twd.csv``,
    ``sample_tree.nwk``, ``feature_tree.nwk`` and ``history.jsonl``.
    """
    config = _validate_run(args)
    data = _read_data(args)
    x = data.matrix
    m_r, m_c = _initial(x, args)
    state = run(args.algorithm, x, m_r, m_c, config)
    residual = check_fixed_point(state, x, config) if state.converged else None
    resolved = {
        "algorithm": args.algorithm,
        "input": str(args.input),
        "format": args.format,
        "initial_metric_r": args.initial_metric_r,
        "initial_metric_c": args.initial_metric_c,
        "initial_r": None if args.initial_r is None else str(args.initial_r),
        "initial_c": None if args.initial_c is None else str(args.initial_c),
        "threads": args.threads,
        **config.as_dict(),
    }
    out = args.output_dir
    out.mkdir(parents=True, exist_ok=True)
    io.write_distance_matrix(state.sample_twd, out / "sample_twd.csv")
    io.write_distance_matrix(state.feature_twd, out / "feature_twd.csv")
    io.write_tree(state.sample_tree, out / "sample_tree.nwk", names=data.row_names)
    io.write_tree(state.feature_tree, out / "feature_tree.nwk", names=data.col_names)
    io.write_history(state.history, out / "history.jsonl", config=resolved, timing=args.timing)
    last = state.history[-1]
    print(f"{args.algorithm}: {state.status} after {state.iteration} iterations "
          f"(change_r={last.change_r:.3g}, change_c={last.change_c:.3g})")
    if residual is not None:
        print(f"fixed-point residuals: r={residual[0]:.3g}, c={residual[1]:.3g}")
    return EXIT_OK if state.converged else EXIT_MAX_ITER


def cmd_gen_toy(args) -> int:
    """Write ``toy.csv`` and the first- and second-level labels of its rows and columns."""
    try:
        spec = ToySpec(
            noise_sigma=args.noise_sigma,
            embed_dim=args.embed_dim,
            seed=args.seed,
            videos_per_group=args.videos_per_group,
            users_per_group=args.users_per_group,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if args.videos_per_group < 1 or args.users_per_group < 1:
        raise UsageError("--videos-per-group and --users-per-group must be at least 1")
    toy = generate_toy(spec)
    out = args.output_dir
    out.mkdir(parents=True, exist_ok=True)
    io.write_dense(toy.X, out / "toy.csv")
    if args.sparse:
        io.write_sparse(toy.X, out / "toy.mtx")
    io.write_labels(toy.user_labels, out / "user_labels.txt")
    io.write_labels(toy.video_labels, out / "video_labels.txt")
    io.write_labels(toy.user_groups, out / "user_groups.txt")
    io.write_labels(toy.video_groups, out / "video_groups.txt")
    print(f"wrote {toy.X.shape[0]}x{toy.X.shape[1]} toy matrix to {out}")
    return EXIT_OK


def cmd_eval_knn(args) -> int:
    """Print a per-k accuracy table followed by one JSON record per k and a summary record."""
    d = io.read_distance_matrix(args.distances)
    labels = io.read_labels(args.labels)
    if len(labels) != d.shape[0]:
        raise UsageError(f"--labels has {len(labels)} lines but --distances is {d.shape[0]}x{d.shape[0]}")
    if any(k < 1 for k in args.k):
        raise UsageError("--k values must be positive")
    if args.trials < 1:
        raise UsageError("--trials must be at least 1")
    if not 0.0 < args.train_fraction < 1.0:
        raise UsageError("--train-fraction must lie in (0, 1)")
    res = knn_accuracy(LabeledDistances(d, labels), k_grid=args.k, train_fraction=args.train_fraction,
                       trials=args.trials, seed=args.seed)
    print(f"{'k':>4}  {'mean':>8}  {'std':>8}")
    for k, mu, sd in zip(res.k_values, res.mean, res.std):
        print(f"{int(k):>4}  {mu:8.4f}  {sd:8.4f}")
    for k, mu, sd in zip(res.k_values, res.mean, res.std):
        print(json.dumps({"k": int(k), "mean": float(mu), "std": float(sd)}, sort_keys=True))
    print(json.dumps({"best_k": res.best_k, "best_mean": res.best_mean, "best_std": res.best_std}, sort_keys=True))
    return EXIT_OK


def cmd_eval_sparsity(args) -> int:
    """Print the per-mode L1 Haar norms as text and as a JSON record."""
    data = _read_data(args)
    t_r = io.read_tree(args.sample_tree, names=data.row_names)
    t_c = io.read_tree(args.feature_tree, names=data.col_names)
    n, m = data.shape
    if t_r.leaf_count != n or t_c.leaf_count != m:
        raise UsageError(
            f"trees have {t_r.leaf_count} and {t_c.leaf_count} leaves but --input is {n}x{m}"
        )
    l1_r, l1_c = sparsity(data.matrix, t_r, t_c)
    print(f"sample mode L1 Haar norm:  {l1_r:.6g}")
    print(f"feature mode L1 Haar norm: {l1_c:.6g}")
    print(json.dumps({"l1_r": l1_r, "l1_c": l1_c}, sort_keys=True))
    return EXIT_OK


def cmd_export(args) -> int:
    """Decode a Newick tree from ``--distances`` and/or rewrite ``--input`` in another format."""
    did = False
    if args.distances is not None or args.tree_out is not None:
        if args.distances is None or args.tree_out is None:
            raise UsageError("--distances and --tree-out must be given together")
        d = io.read_distance_matrix(args.distances)
        names = None
        if args.names is not None:
            names = io.read_labels(args.names)
            if len(names) != d.shape[0]:
                raise UsageError(f"--names has {len(names)} lines but --distances is {d.shape[0]}x{d.shape[0]}")
        tree = decode_tree(d, max_scale=args.max_scale, scale_multiplier=args.scale_multiplier,
                           density_normalize=args.density_normalize, landmark_c=args.landmark_c,
                           seed=args.seed)
        io.write_tree(tree, args.tree_out, names=names)
        did = True
    if args.input is not None or args.dense_out is not None or args.sparse_out is not None:
        if args.input is None or (args.dense_out is None and args.sparse_out is None):
            raise UsageError("--input needs --dense-out or --sparse-out (and vice versa)")
        data = _read_data(args)
        if args.dense_out is not None:
            io.write_dense(data.matrix, args.dense_out, row_names=data.row_names, col_names=data.col_names)
        if args.sparse_out is not None:
            io.write_sparse(data.matrix, args.sparse_out)
        did = True
    if not did:
        raise UsageError("nothing to export: give --distances/--tree-out or --input with an output")
    return EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "gen-toy": cmd_gen_toy,
    "eval-knn": cmd_eval_knn,
    "eval-sparsity": cmd_eval_sparsity,
    "export": cmd_export,
}


def _thread_limit(n):
    if n == 0:
        return nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.threads is None:
            args.threads = _default_threads()
        if args.threads < 0:
            raise UsageError("--threads must be nonnegative")
        with _thread_limit(args.threads):
            return COMMANDS[args.subcommand](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"cotree: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CotreeError, OSError, ValueError) as exc:
        print(f"cotree: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
