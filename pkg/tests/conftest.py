import itertools

import numpy as np
import pytest

from nethac.core import SpatialGraph


def random_graph(n, p, rng, d=2):
    """Erdos-Renyi graph with uniform positions; an oracle-friendly small instance."""
    pos = rng.uniform(0, 5, size=(n, d))
    iu = np.triu_indices(n, 1)
    keep = rng.random(len(iu[0])) < p
    edges = np.column_stack([iu[0][keep], iu[1][keep]])
    return SpatialGraph.from_edges(pos, edges)


def floyd_warshall(A):
    """Textbook all-pairs shortest path lengths on a dense 0/1 matrix."""
    n = A.shape[0]
    D = np.where(A > 0, 1.0, np.inf)
    np.fill_diagonal(D, 0.0)
    for k in range(n):
        D = np.minimum(D, D[:, [k]] + D[[k], :])
    return D


def brute_force_equilibria(A, base, peer):
    """All y in {0,1}^n with y_i = 1{base_i + peer * mean_{j~i} y_j > 0} for every i."""
    n = A.shape[0]
    deg = A.sum(axis=1)
    out = []
    for y in itertools.product((0, 1), repeat=n):
        y = np.array(y)
        s = np.array([A[i] @ y / deg[i] if deg[i] else 0.0 for i in range(n)])
        if np.array_equal((base + peer * s > 0).astype(int), y):
            out.append(y)
    return np.array(out).reshape(-1, n)


def path_graph(n, spacing=1.0):
    pos = (np.arange(n) * spacing)[:, None]
    return SpatialGraph.from_edges(pos, [(i, i + 1) for i in range(n - 1)])


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


# one line per acceptance criterion, echoed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
