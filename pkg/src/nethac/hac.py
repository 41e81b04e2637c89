"""Variance estimators for averages of agent statistics.

All estimators return an estimate of ``Var(n^-1/2 sum_i psi_i)`` as an
(m, m) matrix wrapped in :class:`HacEstimate`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy.spatial import cKDTree

from .core import Kernel, SpatialGraph, as_kernel, kernel_eval
from .graph import bounded_bfs

METHODS = ("iid", "spatial", "network", "generalized_spatial")
DEFAULT_PSD_FLOOR = 0.1


def default_bandwidth(method: str, n: int, d: int = 2) -> float:
    """Reference bandwidths used in the Monte Carlo design."""
    if method == "iid":
        return 0.0
    if method == "spatial":
        return n ** (1.0 / (3 * d))
    if method == "network":
        return math.log(n)
    if method == "generalized_spatial":
        return n ** (1.0 / (4 * d))
    raise ValueError(f"unknown HAC method {method!r}")


def default_theta_bandwidth(n: int, d: int = 2) -> float:
    """``(log n / n)^(1/(2p+d))`` with smoothness ``p = d/2 + 1``."""
    p = d / 2.0 + 1.0
    return (math.log(n) / n) ** (1.0 / (2 * p + d))


@dataclass(frozen=True)
class HacConfig:
    """Estimator choice and tuning.

    ``center`` is ``"sample_mean"`` or a known mean vector (``"known_zero"``
    is shorthand for zeros). ``bandwidth``/``theta_bandwidth`` of ``None``
    select the defaults for the sample size at hand.
    """

    method: str = "spatial"
    kernel: Union[Kernel, str] = "bartlett"
    bandwidth: Optional[float] = None
    theta_bandwidth: Optional[float] = None
    theta_kernel: Union[Kernel, str] = "uniform"
    center: Union[str, tuple, np.ndarray] = "sample_mean"
    psd_floor: Optional[float] = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown HAC method {self.method!r}")
        object.__setattr__(self, "kernel", as_kernel(self.kernel))
        object.__setattr__(self, "theta_kernel", as_kernel(self.theta_kernel))
        if self.bandwidth is not None and self.bandwidth < 0:
            raise ValueError("bandwidth must be nonnegative")
        if self.theta_bandwidth is not None and not self.theta_bandwidth > 0:
            raise ValueError("theta_bandwidth must be positive")
        if self.psd_floor is not None and self.psd_floor < 0:
            raise ValueError("psd_floor must be nonnegative")

    def resolve_bandwidth(self, n: int, d: int = 2) -> float:
        return default_bandwidth(self.method, n, d) if self.bandwidth is None else float(self.bandwidth)


@dataclass
class HacEstimate:
    sigma: np.ndarray
    method: str
    bandwidth: float = 0.0
    kernel: str = "bartlett"
    floor_applied: bool = False
    floor: Optional[float] = None
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "h": self.bandwidth,
            "kernel": self.kernel,
            "floor": self.floor if self.floor_applied else None,
            "sigma": self.sigma.tolist(),
            **self.meta,
        }


def _as_psi(psi) -> np.ndarray:
    psi = np.asarray(psi, dtype=float)
    if psi.ndim == 1:
        psi = psi[:, None]
    if psi.ndim != 2:
        raise ValueError("psi must be an (n, m) matrix")
    if not np.all(np.isfinite(psi)):
        raise ValueError("psi must be finite")
    return psi


def _center(psi: np.ndarray, center) -> np.ndarray:
    if isinstance(center, str):
        if center == "sample_mean":
            return psi - psi.mean(axis=0)
        if center == "known_zero":
            return psi
        raise ValueError(f"unknown centering {center!r}")
    c = np.asarray(center, dtype=float).ravel()
    if c.size != psi.shape[1]:
        raise ValueError("known center must have one entry per moment")
    return psi - c


def _symmetrize(S: np.ndarray) -> np.ndarray:
    return 0.5 * (S + S.T)


def _pair_sum(E: np.ndarray, F: np.ndarray, i, j, w) -> np.ndarray:
    """``sum_{pairs} w * E_i F_j'`` over the given (i, j, w) triples."""
    if len(i) == 0:
        return np.zeros((E.shape[1], F.shape[1]))
    return (E[i] * w[:, None]).T @ F[j]


_NO_PAIRS = (np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64), np.empty(0))


def spatial_pairs(positions, h: float, kernel: Union[Kernel, str] = "bartlett"):
    """Pairs ``i < j`` with nonzero product-kernel weight ``K((rho_i - rho_j)/h)``.

    Candidates come from a KD-tree sup-norm ball of radius ``h`` (the support
    of any product kernel), so only O(n * window) pairs are touched.
    """
    positions = np.asarray(positions, dtype=float)
    if positions.ndim == 1:
        positions = positions[:, None]
    if not h > 0:
        raise ValueError("bandwidth must be positive")
    if positions.shape[0] < 2:
        return _NO_PAIRS
    pairs = cKDTree(positions).query_pairs(h, p=np.inf, output_type="ndarray")
    if len(pairs) == 0:
        return _NO_PAIRS
    i, j = pairs[:, 0], pairs[:, 1]
    w = np.prod(kernel_eval(kernel, (positions[i] - positions[j]) / h), axis=1)
    keep = w != 0
    return i[keep], j[keep], w[keep]


def iid_cov(psi, center="sample_mean") -> HacEstimate:
    """``(1/n) sum_i (psi_i - c)(psi_i - c)'``."""
    psi = _as_psi(psi)
    n = psi.shape[0]
    if isinstance(center, str) and center == "sample_mean" and n < 2:
        raise ValueError("iid_cov with sample-mean centering needs n >= 2")
    E = _center(psi, center)
    return HacEstimate(_symmetrize(E.T @ E / n), "iid", 0.0, "none")


def spatial_hac(psi, positions, cfg: Optional[HacConfig] = None, **kw) -> HacEstimate:
    """Spatial HAC with a product kernel over coordinate differences."""
    cfg = _config(cfg, "spatial", kw)
    psi = _as_psi(psi)
    positions = np.asarray(positions, dtype=float)
    if positions.ndim == 1:
        positions = positions[:, None]
    n = psi.shape[0]
    if positions.shape[0] != n:
        raise ValueError("positions and psi have different numbers of rows")
    h = cfg.resolve_bandwidth(n, positions.shape[1])
    E = _center(psi, cfg.center)
    # h = 0 is the limit h -> 0+: no cross terms
    i, j, w = spatial_pairs(positions, h, cfg.kernel) if h > 0 else _NO_PAIRS
    C = _pair_sum(E, E, i, j, w)
    S = (E.T @ E + C + C.T) / n
    est = HacEstimate(_symmetrize(S), "spatial", h, cfg.kernel.variant, meta={"pairs": int(len(i))})
    return _maybe_floor(est, cfg)


def network_hac(psi, graph: SpatialGraph, cfg: Optional[HacConfig] = None, dist_map=None, **kw) -> HacEstimate:
    """Network HAC: kernel of path distance over bandwidth.

    Pairs further than ``ceil(h)`` hops apart, or disconnected, get weight 0.
    A precomputed :class:`~nethac.graph.BoundedDistanceMap` of at least that
    depth may be passed as ``dist_map``.
    """
    cfg = _config(cfg, "network", kw)
    psi = _as_psi(psi)
    n = psi.shape[0]
    if graph.n != n:
        raise ValueError("graph and psi have different numbers of agents")
    h = cfg.resolve_bandwidth(n)
    E = _center(psi, cfg.center)
    S = E.T @ E
    npairs = 0
    if h > 0 and n > 1:
        depth = int(math.ceil(h))
        if dist_map is None or dist_map.max_depth < depth:
            dist_map = bounded_bfs(graph, depth)
        src, tgt, dist = dist_map.pairs()
        keep = (src < tgt) & (dist <= depth)
        src, tgt = src[keep], tgt[keep]
        w = kernel_eval(cfg.kernel, dist[keep] / h)
        nz = w != 0
        src, tgt, w = src[nz], tgt[nz], w[nz]
        C = _pair_sum(E, E, src, tgt, w)
        S = S + C + C.T
        npairs = int(len(src))
    est = HacEstimate(_symmetrize(S / n), "network", h, cfg.kernel.variant, meta={"pairs": npairs})
    return _maybe_floor(est, cfg)


def nadaraya_watson(points, values, queries, b: float, kernel: Union[Kernel, str] = "uniform",
                    max_doublings: int = 60):
    """Kernel regression estimate of ``E[values | point]`` at each query.

    Uses the product kernel ``prod_k K((q_k - p_k)/b)``. Queries whose window
    holds no observations are retried with ``b`` doubled until it does.
    Returns ``(estimates, widened)`` where ``widened`` flags those queries.
    """
    if not b > 0:
        raise ValueError("kernel-regression bandwidth must be positive")
    points = np.asarray(points, dtype=float)
    queries = np.asarray(queries, dtype=float)
    values = _as_psi(values)
    if points.ndim == 1:
        points = points[:, None]
    if queries.ndim == 1:
        queries = queries[:, None]
    tree = cKDTree(points)
    out = np.zeros((queries.shape[0], values.shape[1]))
    widened = np.zeros(queries.shape[0], dtype=bool)
    todo = np.arange(queries.shape[0])
    bw = float(b)
    for attempt in range(max_doublings + 1):
        num, den = _nw_sums(tree, points, values, queries[todo], bw, kernel)
        ok = den > 0
        out[todo[ok]] = num[ok] / den[ok, None]
        widened[todo[ok]] = attempt > 0
        todo = todo[~ok]
        if todo.size == 0:
            return out, widened
        bw *= 2.0
    raise ValueError("kernel regression window stayed empty")


def _nw_sums(tree, points, values, queries, b, kernel):
    sm = tree.sparse_distance_matrix(cKDTree(queries), b, p=np.inf, output_type="ndarray")
    num = np.zeros((queries.shape[0], values.shape[1]))
    den = np.zeros(queries.shape[0])
    if len(sm):
        pi, qi = sm["i"], sm["j"]
        w = np.prod(kernel_eval(kernel, (queries[qi] - points[pi]) / b), axis=1)
        np.add.at(den, qi, w)
        np.add.at(num, qi, values[pi] * w[:, None])
    return num, den


def _scatter(index, values, n):
    """Column-wise ``np.add.at`` via bincount."""
    if values.ndim == 1:
        return np.bincount(index, weights=values, minlength=n)
    return np.column_stack([np.bincount(index, weights=values[:, c], minlength=n)
                            for c in range(values.shape[1])])


def _self_nw(u: np.ndarray, psi: np.ndarray, b: float, kernel):
    """Kernel regression evaluated at the data points themselves (each point sees itself)."""
    n = u.shape[0]
    i, j, w = spatial_pairs(u, b, kernel)
    den = 1.0 + _scatter(i, w, n) + _scatter(j, w, n)
    num = psi + _scatter(i, psi[j] * w[:, None], n) + _scatter(j, psi[i] * w[:, None], n)
    return num / den[:, None]


def generalized_spatial_hac(psi, positions, cfg: Optional[HacConfig] = None, **kw) -> HacEstimate:
    """HAC that estimates the position-dependent mean instead of assuming stationarity.

    ``theta(p)`` is a kernel regression of ``psi`` on positions rescaled by
    ``n^(-1/d)``; the estimate is ``sigma2 - alpha alpha'`` where

    ``sigma2 = (1/n) sum_i psi_i psi_i' + (1/n) sum_{i != j} (psi_i psi_j' - theta_i theta_j') K_ij``
    ``alpha  = mean(psi) + (1/n) sum_{i != j} (psi_i - theta_i) K_ij``.
    """
    cfg = _config(cfg, "generalized_spatial", kw)
    psi = _as_psi(psi)
    positions = np.asarray(positions, dtype=float)
    if positions.ndim == 1:
        positions = positions[:, None]
    n, d = positions.shape
    if psi.shape[0] != n:
        raise ValueError("positions and psi have different numbers of rows")
    h = cfg.resolve_bandwidth(n, d)
    b = default_theta_bandwidth(n, d) if cfg.theta_bandwidth is None else float(cfg.theta_bandwidth)
    if not b > 0:
        raise ValueError("kernel-regression bandwidth must be positive")
    u = positions * n ** (-1.0 / d)
    theta = _self_nw(u, psi, b, cfg.theta_kernel)
    i, j, w = spatial_pairs(positions, h, cfg.kernel) if h > 0 else _NO_PAIRS
    cross = _pair_sum(psi, psi, i, j, w) - _pair_sum(theta, theta, i, j, w)
    sigma2 = (psi.T @ psi + cross + cross.T) / n
    ksum = _scatter(i, w, n) + _scatter(j, w, n)
    alpha = psi.mean(axis=0) + ((psi - theta) * ksum[:, None]).sum(axis=0) / n
    S = sigma2 - np.outer(alpha, alpha)
    est = HacEstimate(_symmetrize(S), "generalized_spatial", h, cfg.kernel.variant,
                      meta={"theta_bandwidth": b, "theta_kernel": cfg.theta_kernel.variant,
                            "pairs": int(len(i)), "widened": 0})
    return _maybe_floor(est, cfg)


def psd_floor(estimate, c: float = DEFAULT_PSD_FLOOR):
    """Clamp eigenvalues from below at ``c``: ``Q max(Lambda, c I) Q'``."""
    if c < 0:
        raise ValueError("floor must be nonnegative")
    S = estimate.sigma if isinstance(estimate, HacEstimate) else np.atleast_2d(np.asarray(estimate, float))
    if np.max(np.abs(S - S.T), initial=0.0) > 1e-10 * max(1.0, np.max(np.abs(S), initial=0.0)):
        raise ValueError("psd_floor needs a symmetric matrix")
    lam, Q = np.linalg.eigh(_symmetrize(S))
    out = _symmetrize((Q * np.maximum(lam, c)) @ Q.T)
    if isinstance(estimate, HacEstimate):
        return HacEstimate(out, estimate.method, estimate.bandwidth, estimate.kernel, True, c, dict(estimate.meta))
    return out


def estimate(psi, cfg: HacConfig, positions=None, graph: Optional[SpatialGraph] = None, dist_map=None) -> HacEstimate:
    """Dispatch on ``cfg.method``."""
    if cfg.method == "iid":
        return _maybe_floor(iid_cov(psi, cfg.center), cfg)
    if cfg.method == "network":
        if graph is None:
            raise ValueError("network HAC needs a graph")
        return network_hac(psi, graph, cfg, dist_map=dist_map)
    if positions is None:
        if graph is None:
            raise ValueError(f"{cfg.method} HAC needs positions")
        positions = graph.positions
    if cfg.method == "spatial":
        return spatial_hac(psi, positions, cfg)
    return generalized_spatial_hac(psi, positions, cfg)


def _config(cfg, method, kw) -> HacConfig:
    if cfg is None:
        return HacConfig(method=method, **kw)
    if kw:
        raise TypeError("pass either a HacConfig or keyword options, not both")
    if cfg.method != method:
        cfg = HacConfig(method, cfg.kernel, cfg.bandwidth, cfg.theta_bandwidth, cfg.theta_kernel,
                        cfg.center, cfg.psd_floor)
    return cfg


def _maybe_floor(est: HacEstimate, cfg: HacConfig) -> HacEstimate:
    return psd_floor(est, cfg.psd_floor) if cfg.psd_floor is not None else est
