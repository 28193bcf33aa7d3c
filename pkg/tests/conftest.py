import numpy as np
import pytest

from cotree.evaluation import ToySpec, generate_toy
from cotree.tree import tree_from_merges


def random_tree(m, rng, weight_scale=1.0):
    """Random full binary tree on ``m`` leaves built by random agglomeration."""
    active = list(range(m))
    heights = np.zeros(2 * m - 1)
    merges, hs = [], []
    for t in range(m - 1):
        a, b = rng.choice(len(active), size=2, replace=False)
        na, nb = active[a], active[b]
        h = max(heights[na], heights[nb]) + weight_scale * rng.uniform(0.05, 1.0)
        heights[m + t] = h
        merges.append((na, nb))
        hs.append(h)
        active = [v for v in active if v not in (na, nb)] + [m + t]
    return tree_from_merges(merges, hs, m)


def random_simplex(m, rng, size=None):
    shape = (m,) if size is None else (size, m)
    x = rng.exponential(size=shape)
    return x / x.sum(axis=-1, keepdims=True)


@pytest.fixture
def rng():
    return np.random.default_rng(20261018)


@pytest.fixture(scope="session")
def toy():
    return generate_toy(ToySpec(seed=0))


# one "criterion N: PASS|FAIL ..." line per acceptance test, echoed after the run
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
