"""Agent positions under increasing-domain scaling and spatial network formation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import expit

from .core import SpatialGraph, as_generator

SHOCKS = ("logistic", "exponential_tail")


@dataclass(frozen=True)
class RggModel:
    threshold: float = 1.0

    def __post_init__(self):
        if not self.threshold > 0:
            raise ValueError("RGG threshold must be positive")


@dataclass(frozen=True)
class LatentIndexModel:
    """Linear latent index ``intercept - distance_coef*r + homophily_coef*1{mu_i=mu_j} + zeta``.

    ``shock`` picks the pair shock distribution: standard logistic, or
    ``exponential_tail`` (standard Laplace). Both give link probabilities
    that decay exponentially in distance.
    """

    intercept: float = 0.0
    distance_coef: float = 1.0
    homophily_coef: float = 0.0
    shock: str = "logistic"

    def __post_init__(self):
        if not self.distance_coef > 0:
            raise ValueError("distance_coef must be positive")
        if self.shock not in SHOCKS:
            raise ValueError(f"unknown shock {self.shock!r}")

    def link_probability(self, r, same_type=False):
        """P(link) for a pair at distance ``r``; the closed form of the index CDF."""
        m = self.intercept - self.distance_coef * np.asarray(r, dtype=float)
        m = m + self.homophily_coef * np.asarray(same_type, dtype=float)
        if self.shock == "logistic":
            return expit(m)
        # P(zeta > -m) for standard Laplace
        return np.where(m >= 0, 1.0 - 0.5 * np.exp(-np.abs(m)), 0.5 * np.exp(-np.abs(m)))


@dataclass(frozen=True)
class NetGenConfig:
    n: int
    d: int = 2
    kappa: float = 5.0 / np.pi
    model: Union[RggModel, LatentIndexModel] = RggModel()

    def __post_init__(self):
        if int(self.n) < 1:
            raise ValueError("n must be at least 1")
        if int(self.d) < 1:
            raise ValueError("d must be at least 1")
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")

    @property
    def scale(self) -> float:
        return position_scale(self.n, self.kappa, self.d)


def position_scale(n: int, kappa: float, d: int) -> float:
    """omega_n = (n / kappa)^(1/d)."""
    return float((n / kappa) ** (1.0 / d))


def sample_positions(cfg: NetGenConfig, rng) -> np.ndarray:
    """Draw ``omega_n * U[0,1]^d`` positions for ``cfg.n`` agents."""
    if cfg.n < 1:
        raise ValueError("n must be at least 1")
    gen = as_generator(rng)
    return cfg.scale * gen.random((cfg.n, cfg.d))


def form_rgg(positions, threshold: float = 1.0, scale: float = 1.0, kappa: Optional[float] = None) -> SpatialGraph:
    """Random geometric graph: link iff Euclidean distance <= threshold."""
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    positions = np.asarray(positions, dtype=float)
    if positions.ndim == 1:
        positions = positions[:, None]
    n = positions.shape[0]
    if n > 1:
        pairs = cKDTree(positions).query_pairs(threshold, output_type="ndarray")
    else:
        pairs = np.empty((0, 2), dtype=np.int64)
    return SpatialGraph.from_edges(positions, pairs, scale=scale, kappa=kappa)


def form_latent_index(positions, node_attrs, model: LatentIndexModel, rng,
                      scale: float = 1.0, kappa: Optional[float] = None) -> SpatialGraph:
    """Latent-index network with one shock per unordered pair (O(n^2) pairs)."""
    if isinstance(model, NetGenConfig):
        model = model.model
    if not isinstance(model, LatentIndexModel):
        raise TypeError("form_latent_index needs a LatentIndexModel")
    positions = np.asarray(positions, dtype=float)
    if positions.ndim == 1:
        positions = positions[:, None]
    n = positions.shape[0]
    if model.homophily_coef != 0:
        if node_attrs is None:
            raise ValueError("node_attrs required when homophily_coef != 0")
        node_attrs = np.asarray(node_attrs)
        if node_attrs.shape != (n,):
            raise ValueError("node_attrs must have one entry per agent")
    gen = as_generator(rng)
    rows, cols = [], []
    for i in range(n - 1):
        j = np.arange(i + 1, n)
        r = np.linalg.norm(positions[j] - positions[i], axis=1)
        index = model.intercept - model.distance_coef * r
        if model.homophily_coef != 0:
            index = index + model.homophily_coef * (node_attrs[j] == node_attrs[i])
        if model.shock == "logistic":
            zeta = gen.logistic(size=j.size)
        else:
            zeta = gen.laplace(size=j.size)
        hit = j[index + zeta > 0]
        rows.append(np.full(hit.size, i))
        cols.append(hit)
    if rows:
        edges = np.column_stack([np.concatenate(rows), np.concatenate(cols)])
    else:
        edges = np.empty((0, 2), dtype=np.int64)
    return SpatialGraph.from_edges(positions, edges, scale=scale, kappa=kappa)


def generate(cfg: NetGenConfig, rng, node_attrs=None) -> SpatialGraph:
    """Sample positions and form the network described by ``cfg``."""
    gen = as_generator(rng)
    pos = sample_positions(cfg, gen)
    if isinstance(cfg.model, RggModel):
        return form_rgg(pos, cfg.model.threshold, scale=cfg.scale, kappa=cfg.kappa)
    return form_latent_index(pos, node_attrs, cfg.model, gen, scale=cfg.scale, kappa=cfg.kappa)
