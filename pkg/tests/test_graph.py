import math

import numpy as np
import pytest
from scipy.sparse.csgraph import shortest_path

from conftest import floyd_warshall, path_graph, random_graph
from nethac.core import SpatialGraph
from nethac.graph import (
    bounded_bfs,
    components,
    interaction_graph,
    k_neighborhood,
    strategic_neighborhoods,
)
from nethac.netgen import NetGenConfig, generate
from nethac.simsocial import OutcomeModel, best_response_fixed_point, compute_rc, verify_nash


def test_bfs_path_graph():
    dm = bounded_bfs(path_graph(3), 2)
    assert dm.get(0, 2) == 2 and dm.get(0, 1) == 1 and dm.get(0, 0) == 0


def test_bfs_empty_graph_only_self():
    g = SpatialGraph.from_edges(np.zeros((5, 2)), np.empty((0, 2)))
    dm = bounded_bfs(g, 3)
    src, tgt, dist = dm.pairs()
    np.testing.assert_array_equal(src, tgt)
    assert np.all(dist == 0)


@pytest.mark.parametrize("seed", range(10))
def test_bfs_matches_floyd_warshall(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(10, 61))
    g = random_graph(n, rng.uniform(0.02, 0.15), rng)
    full = floyd_warshall(g.adjacency.toarray())
    for depth in (0, 1, 2, 4, n - 1):
        oracle = np.where(full <= depth, full, np.inf)
        np.testing.assert_array_equal(bounded_bfs(g, depth, chunk=7).to_dense(), oracle)


def test_bfs_map_invariants(rng):
    g = random_graph(40, 0.08, rng)
    D = bounded_bfs(g, 3).to_dense()
    assert np.all(np.diag(D) == 0)
    np.testing.assert_array_equal(D, D.T)
    fin = np.isfinite(D)
    for i, j, k in zip(*[rng.integers(0, 40, 2000) for _ in range(3)]):
        if fin[i, j] and fin[j, k] and fin[i, k]:
            assert D[i, k] <= D[i, j] + D[j, k]


def test_bfs_rejects_negative_depth():
    with pytest.raises(ValueError):
        bounded_bfs(path_graph(3), -1)


def test_k_neighborhood_examples():
    g = path_graph(3)
    np.testing.assert_array_equal(k_neighborhood(g, 1, 0), [1])
    np.testing.assert_array_equal(k_neighborhood(g, 0, 1), [0, 1])
    with pytest.raises(IndexError):
        k_neighborhood(g, 3, 1)


def test_k_neighborhood_matches_bfs(rng):
    g = random_graph(30, 0.1, rng)
    D = floyd_warshall(g.adjacency.toarray())
    for i in range(30):
        np.testing.assert_array_equal(k_neighborhood(g, i, 3), np.flatnonzero(D[i] <= 3))


def test_components_examples():
    edgeless = SpatialGraph.from_edges(np.zeros((4, 1)), np.empty((0, 2)))
    assert [b.tolist() for b in components(edgeless)] == [[0], [1], [2], [3]]
    complete = SpatialGraph.from_edges(np.zeros((5, 1)), [(i, j) for i in range(5) for j in range(i + 1, 5)])
    assert [b.tolist() for b in components(complete)] == [[0, 1, 2, 3, 4]]


def test_components_match_reachability():
    g = generate(NetGenConfig(200, 2, 5 / math.pi), 4)
    reach = np.isfinite(shortest_path(g.adjacency, unweighted=True, directed=False))
    blocks = components(g)
    assert sorted(np.concatenate(blocks).tolist()) == list(range(200))
    for b in blocks:
        assert reach[np.ix_(b, b)].all()
        outside = np.setdiff1d(np.arange(200), b)
        assert not reach[np.ix_(b, outside)].any()


def test_strategic_all_zero_flags():
    g = path_graph(5)
    part = strategic_neighborhoods(g, np.zeros(5))
    assert [b.tolist() for b in part.blocks] == [[i] for i in range(5)]


def test_strategic_all_one_connected():
    part = strategic_neighborhoods(path_graph(6), np.ones(6))
    assert [b.tolist() for b in part.blocks] == [list(range(6))]


def _closure_oracle(A, rc):
    """Strongly connected components of D_ij = A_ij R_j by transitive closure, plus attachment."""
    n = len(rc)
    D = (A * rc[None, :]).astype(bool)
    R = D | np.eye(n, dtype=bool)
    for k in range(n):
        R = R | (R[:, [k]] & R[[k], :])
    blocks = set()
    covered = np.zeros(n, dtype=bool)
    for i in np.flatnonzero(rc):
        scc = np.flatnonzero(R[i] & R[:, i])
        attached = [k for k in range(n) if not rc[k] and A[scc, k].any()]
        block = tuple(sorted(set(scc.tolist()) | set(attached)))
        blocks.add(block)
        covered[list(block)] = True
    blocks |= {(k,) for k in np.flatnonzero(~covered)}
    return sorted(blocks)


@pytest.mark.parametrize("seed", range(25))
def test_strategic_matches_closure_oracle(seed):
    rng = np.random.default_rng(seed)
    g = random_graph(10, 0.3, rng)
    rc = (rng.random(10) < 0.5).astype(int)
    part = strategic_neighborhoods(g, rc)
    assert sorted(tuple(b.tolist()) for b in part.blocks) == _closure_oracle(g.adjacency.toarray(), rc)
    for i in np.flatnonzero(rc):
        assert len(part.membership[i]) == 1
    assert all(len(m) >= 1 for m in part.membership)


def test_strategic_length_mismatch():
    with pytest.raises(ValueError):
        strategic_neighborhoods(path_graph(3), [1, 0])


def test_interaction_graph():
    D = interaction_graph(path_graph(3), [1, 0, 1]).toarray()
    np.testing.assert_array_equal(D, [[0, 0, 0], [1, 0, 1], [0, 0, 0]])


@pytest.mark.parametrize("seed", range(20))
def test_strategic_neighborhoods_are_subgames(seed):
    # restricting any equilibrium to a strategic neighborhood leaves a Nash equilibrium of the subgame
    rng = np.random.default_rng(100 + seed)
    n = int(rng.integers(20, 201))
    g = generate(NetGenConfig(n, 2, 5 / math.pi), rng)
    model = OutcomeModel((rng.normal(0, 0.5), rng.normal(0, 0.5), rng.uniform(0.5, 2.0)), "probit", "iid",
                         "contemporaneous_neighbor_mean")
    x = rng.exponential(size=(n, 1))
    nu = rng.standard_normal(n)
    rc = compute_rc(model, nu, x)
    part = strategic_neighborhoods(g, rc)
    violations = 0
    for init in ("all_ones", "all_zeros"):
        y, _ = best_response_fixed_point(g, model, x, nu, init)
        for b in part.blocks:
            violations += not verify_nash(g.subgraph(b), model, nu[b], y[b], x[b])
    assert violations == 0


def _ratio_quantile(n, seeds=3):
    # dense design (expected degree about 49): near the percolation threshold the
    # degree-5 design gives a quantile too noisy for a monotonicity check
    qs = []
    for s in range(seeds):
        g = generate(NetGenConfig(n, 2, 5 * math.pi), 1000 + s)
        L = shortest_path(g.adjacency, unweighted=True, directed=False)
        iu = np.triu_indices(n, 1)
        ell = L[iu]
        dist = np.linalg.norm(g.positions[iu[0]] - g.positions[iu[1]], axis=1)
        ok = np.isfinite(ell)
        qs.append(np.quantile(ell[ok] / dist[ok], 0.99))
    return float(np.mean(qs))


def test_path_to_spatial_distance_ratio_diagnostic():
    q = {n: _ratio_quantile(n) for n in (500, 1000, 2000)}
    print("99th percentile of path/Euclidean distance:", q)
    assert all(np.isfinite(v) for v in q.values())
    assert q[1000] <= 1.05 * q[500] and q[2000] <= 1.05 * q[1000]
