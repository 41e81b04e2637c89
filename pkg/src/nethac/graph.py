"""Bounded path distances, K-neighborhoods, components and strategic neighborhoods."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components, dijkstra

from .core import SpatialGraph


@dataclass(frozen=True)
class BoundedDistanceMap:
    """Shortest-path lengths for all pairs within ``max_depth`` hops.

    Stored CSR-style: the targets of source ``i`` are
    ``targets[indptr[i]:indptr[i+1]]`` (sorted), with matching ``dist``.
    Self-distances are recorded; absent pairs are at distance infinity.
    """

    indptr: np.ndarray
    targets: np.ndarray
    dist: np.ndarray
    max_depth: int

    @property
    def n(self) -> int:
        return len(self.indptr) - 1

    def row(self, i: int):
        s = slice(self.indptr[i], self.indptr[i + 1])
        return self.targets[s], self.dist[s]

    def get(self, i: int, j: int) -> float:
        t, d = self.row(i)
        k = np.searchsorted(t, j)
        if k < len(t) and t[k] == j:
            return float(d[k])
        return np.inf

    def pairs(self):
        """(sources, targets, distances) arrays over every recorded pair."""
        src = np.repeat(np.arange(self.n), np.diff(self.indptr))
        return src, self.targets, self.dist

    def to_dense(self) -> np.ndarray:
        out = np.full((self.n, self.n), np.inf)
        src, tgt, dist = self.pairs()
        out[src, tgt] = dist
        return out


def bounded_bfs(graph: SpatialGraph, max_depth: int, chunk: int = 512) -> BoundedDistanceMap:
    """Depth-limited BFS from every agent.

    Sources are processed in blocks of ``chunk`` so memory stays at
    ``chunk * n`` regardless of ``n``.
    """
    if max_depth < 0:
        raise ValueError("max_depth must be nonnegative")
    max_depth = int(max_depth)
    n = graph.n
    A = graph.adjacency
    counts = np.zeros(n, dtype=np.int64)
    tgts, dists = [], []
    for start in range(0, n, chunk):
        idx = np.arange(start, min(start + chunk, n))
        if max_depth == 0 or A.nnz == 0:
            D = np.full((idx.size, n), np.inf)
            D[np.arange(idx.size), idx] = 0.0
        else:
            D = dijkstra(A, directed=False, unweighted=True, indices=idx, limit=max_depth + 0.5)
        r, c = np.nonzero(np.isfinite(D))
        counts[idx] = np.bincount(r, minlength=idx.size)
        tgts.append(c)
        dists.append(D[r, c].astype(np.int32))
    indptr = np.r_[0, np.cumsum(counts)]
    return BoundedDistanceMap(indptr, np.concatenate(tgts).astype(np.int64), np.concatenate(dists), max_depth)


def k_neighborhood(graph: SpatialGraph, i: int, K: int) -> np.ndarray:
    """Sorted array of agents within path distance ``K`` of ``i`` (including ``i``)."""
    if not 0 <= i < graph.n:
        raise IndexError(f"agent {i} out of range")
    if K < 0:
        raise ValueError("K must be nonnegative")
    if K == 0 or graph.adjacency.nnz == 0:
        return np.array([i], dtype=np.int64)
    d = dijkstra(graph.adjacency, directed=False, unweighted=True, indices=i, limit=K + 0.5)
    return np.flatnonzero(np.isfinite(d))


def component_labels(graph: SpatialGraph) -> np.ndarray:
    _, labels = connected_components(graph.adjacency, directed=False)
    return labels


def components(graph: SpatialGraph) -> list[np.ndarray]:
    """Connected components, ordered by smallest member."""
    labels = component_labels(graph)
    order = np.argsort(labels, kind="stable")
    splits = np.flatnonzero(np.diff(labels[order])) + 1
    blocks = np.split(order, splits)
    return sorted(blocks, key=lambda b: b[0])


@dataclass(frozen=True)
class StrategicPartition:
    """Cover of the agents by strategic neighborhoods.

    ``blocks[k]`` lists the members of the k-th neighborhood; ``core[k]``
    marks which of them have ``R^c = 1``. ``membership[i]`` lists the
    neighborhoods containing agent ``i``.
    """

    blocks: list
    core: list
    membership: list

    def neighborhoods_of(self, i: int) -> list:
        return [self.blocks[k] for k in self.membership[i]]


def strategic_neighborhoods(graph: SpatialGraph, rc_flags) -> StrategicPartition:
    """Group agents into strategic neighborhoods.

    Agents with ``R^c = 1`` are grouped by the components of the network
    restricted to them (among these agents the interaction graph
    ``D_ij = A_ij R_j`` is symmetric). Each group is then extended by every
    determined neighbour (``R^c = 0``). Determined agents adjacent to no
    group form singletons.
    """
    rc = np.asarray(rc_flags).astype(bool)
    if rc.shape != (graph.n,):
        raise ValueError("rc_flags length must equal number of agents")
    A = graph.adjacency
    active = np.flatnonzero(rc)
    blocks, cores = [], []
    covered = np.zeros(graph.n, dtype=bool)
    if active.size:
        sub = A[active][:, active]
        _, lab = connected_components(sub, directed=False)
        for c in range(lab.max() + 1):
            members = active[lab == c]
            nbrs = np.unique(A[members].indices)
            attached = nbrs[~rc[nbrs]]
            block = np.union1d(members, attached)
            blocks.append(block)
            cores.append(rc[block])
            covered[block] = True
    for k in np.flatnonzero(~covered):
        blocks.append(np.array([k], dtype=np.int64))
        cores.append(np.array([False]))
    order = sorted(range(len(blocks)), key=lambda b: blocks[b][0])
    blocks = [blocks[b] for b in order]
    cores = [cores[b] for b in order]
    membership = [[] for _ in range(graph.n)]
    for b, block in enumerate(blocks):
        for i in block:
            membership[i].append(b)
    return StrategicPartition(blocks, cores, membership)


def interaction_graph(graph: SpatialGraph, rc_flags) -> sparse.csr_matrix:
    """Directed matrix ``D_ij = A_ij * R_j``."""
    rc = np.asarray(rc_flags, dtype=np.int8)
    return sparse.csr_matrix(graph.adjacency.multiply(rc[None, :]))
