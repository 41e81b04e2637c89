"""Shared types, HAC kernels and the seeded random-stream contract."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy import sparse

KERNELS = ("bartlett", "uniform")


@dataclass(frozen=True)
class Kernel:
    """One-dimensional HAC kernel with support on [-1, 1].

    In dimension d > 1 the kernel is applied as a product over coordinates,
    see :func:`product_kernel_eval`.
    """

    variant: str = "bartlett"

    def __post_init__(self):
        if self.variant not in KERNELS:
            raise ValueError(f"unknown kernel {self.variant!r}; expected one of {KERNELS}")

    def __call__(self, x):
        return kernel_eval(self, x)


def as_kernel(kernel: Union[Kernel, str]) -> Kernel:
    return kernel if isinstance(kernel, Kernel) else Kernel(kernel)


def kernel_eval(kernel: Union[Kernel, str], x):
    """Evaluate the kernel at ``x`` (scalar or array).

    ``x = +inf`` (a disconnected pair) evaluates to 0.
    """
    kernel = as_kernel(kernel)
    ax = np.abs(np.asarray(x, dtype=float))
    inside = ax <= 1.0
    if kernel.variant == "bartlett":
        out = np.where(inside, 1.0 - np.where(inside, ax, 0.0), 0.0)
    else:
        out = inside.astype(float)
    return float(out) if out.ndim == 0 else out


def product_kernel_eval(kernel: Union[Kernel, str], v, h: float):
    """Product kernel ``prod_k K(v_k / h)``.

    ``v`` is a d-vector or an (m, d) array of difference vectors; returns a
    scalar or an m-vector respectively.
    """
    if not h > 0:
        raise ValueError("bandwidth h must be positive")
    v = np.asarray(v, dtype=float)
    vals = kernel_eval(kernel, v / h)
    return np.prod(vals, axis=-1) if v.ndim > 0 else vals


@dataclass(frozen=True)
class RngSpec:
    """A reproducible random stream.

    The generator is derived from ``(master_seed, stream_id)`` alone, so a
    replication draws the same numbers regardless of which worker runs it or
    in what order.
    """

    master_seed: int
    stream_id: int = 0

    def __post_init__(self):
        for name in ("master_seed", "stream_id"):
            v = getattr(self, name)
            if not 0 <= int(v) < 2**64:
                raise ValueError(f"{name} must be a 64-bit unsigned integer")

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(int(self.master_seed), spawn_key=(int(self.stream_id),))
        return np.random.Generator(np.random.PCG64(ss))


def as_generator(rng) -> np.random.Generator:
    """Accept an :class:`RngSpec`, a ``Generator`` or an integer seed."""
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngSpec):
        return rng.generator()
    return RngSpec(int(rng)).generator()


def stream_index(namespace: int, n: int, rep: int, attempt: int = 0) -> int:
    """Pack a (namespace, n, replication, attempt) tuple into one stream id."""
    if not (0 <= namespace < 2**8 and 0 <= attempt < 2**8 and 0 <= n < 2**24 and 0 <= rep < 2**24):
        raise ValueError("stream coordinates out of range")
    return (namespace << 56) | (attempt << 48) | (n << 24) | rep


@dataclass(frozen=True)
class SpatialGraph:
    """Agent positions in R^d and an undirected, loop-free adjacency matrix.

    Attributes
    ----------
    positions : (n, d) ndarray
        Scaled positions ``rho_i = omega_n * rho_tilde_i``.
    adjacency : scipy.sparse.csr_matrix
        Symmetric 0/1 matrix with empty diagonal.
    scale : float
        The scaling factor ``omega_n`` used to generate the positions.
    kappa : float or None
        Density constant used in generation, kept as metadata.
    """

    positions: np.ndarray
    adjacency: sparse.csr_matrix
    scale: float = 1.0
    kappa: float | None = None
    _degrees: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        if pos.ndim == 1:
            pos = pos[:, None]
        if pos.ndim != 2 or pos.shape[0] < 1:
            raise ValueError("positions must be an (n, d) array with n >= 1")
        if not np.all(np.isfinite(pos)):
            raise ValueError("positions must be finite")
        A = sparse.csr_matrix(self.adjacency, dtype=np.int8)
        if A.shape != (pos.shape[0], pos.shape[0]):
            raise ValueError("adjacency shape does not match number of positions")
        A.sum_duplicates()
        A.eliminate_zeros()
        if A.nnz and (A.data != 1).any():
            raise ValueError("adjacency must be binary")
        if A.diagonal().any():
            raise ValueError("adjacency must have zero diagonal")
        if (A != A.T).nnz:
            raise ValueError("adjacency must be symmetric")
        A.sort_indices()
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "adjacency", A)
        deg = np.asarray(A.sum(axis=1)).ravel().astype(np.int64)
        deg.setflags(write=False)
        object.__setattr__(self, "_degrees", deg)
        if not self.scale > 0:
            raise ValueError("scale must be positive")

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    @property
    def d(self) -> int:
        return self.positions.shape[1]

    @property
    def degrees(self) -> np.ndarray:
        return self._degrees

    def edges(self) -> np.ndarray:
        """Canonical edge list, one row ``(i, j)`` with ``i < j`` per edge."""
        coo = sparse.triu(self.adjacency, k=1).tocoo()
        order = np.lexsort((coo.col, coo.row))
        return np.column_stack([coo.row[order], coo.col[order]]).astype(np.int64)

    def neighbor_mean(self, values) -> np.ndarray:
        """Average of ``values`` over each agent's neighbours (0 for isolates)."""
        values = np.asarray(values, dtype=float)
        total = self.adjacency @ values
        deg = self.degrees.reshape((-1,) + (1,) * (values.ndim - 1))
        return np.where(deg > 0, total / np.maximum(deg, 1), 0.0)

    def subgraph(self, nodes) -> "SpatialGraph":
        nodes = np.asarray(nodes, dtype=np.int64)
        return SpatialGraph(self.positions[nodes], self.adjacency[nodes][:, nodes], self.scale, self.kappa)

    @classmethod
    def from_edges(cls, positions, edges, scale: float = 1.0, kappa: float | None = None) -> "SpatialGraph":
        """Build from an edge list; duplicates and orientation are canonicalized."""
        positions = np.asarray(positions, dtype=float)
        if positions.ndim == 1:
            positions = positions[:, None]
        n = positions.shape[0]
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if edges.size and (edges.min() < 0 or edges.max() >= n):
            raise ValueError("edge endpoint out of range")
        if (edges[:, 0] == edges[:, 1]).any():
            raise ValueError("self-links are not allowed")
        A = sparse.coo_matrix(
            (np.ones(2 * len(edges), dtype=np.int8),
             (np.r_[edges[:, 0], edges[:, 1]], np.r_[edges[:, 1], edges[:, 0]])),
            shape=(n, n),
        ).tocsr()
        A.data[:] = 1
        return cls(positions, A, scale, kappa)


@dataclass(frozen=True)
class Panel:
    """Binary outcomes ``Y_i^t`` and covariates ``X_i^t`` for ``t = 0..T``.

    ``outcomes`` is (n, T+1); ``covariates`` is (n, T+1, k).
    """

    outcomes: np.ndarray
    covariates: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.outcomes)
        if y.ndim == 1:
            y = y[:, None]
        if not np.isin(y, (0, 1)).all():
            raise ValueError("outcomes must be 0/1")
        y = y.astype(np.int8)
        x = np.asarray(self.covariates, dtype=float)
        if x.ndim == 2:
            x = x[:, :, None]
        if x.shape[:2] != y.shape:
            raise ValueError("covariates must be (n, T+1, k) matching outcomes")
        if not np.all(np.isfinite(x)):
            raise ValueError("covariates must be finite")
        y.setflags(write=False)
        x.setflags(write=False)
        object.__setattr__(self, "outcomes", y)
        object.__setattr__(self, "covariates", x)

    @property
    def n(self) -> int:
        return self.outcomes.shape[0]

    @property
    def periods(self) -> int:
        return self.outcomes.shape[1]

    @property
    def T(self) -> int:
        return self.periods - 1

    @property
    def k(self) -> int:
        return self.covariates.shape[2]

    def subset(self, nodes) -> "Panel":
        nodes = np.asarray(nodes, dtype=np.int64)
        return Panel(self.outcomes[nodes], self.covariates[nodes])
