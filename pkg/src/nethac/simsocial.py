"""Dynamic and static binary-choice models with peer effects, and agent statistics."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import Panel, SpatialGraph, as_generator

LINKS = ("probit", "logit")
ERROR_DESIGNS = ("iid", "neighbor_avg_weighted")
PEER_STATS = ("lagged_neighbor_mean", "contemporaneous_neighbor_mean")


class NonConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class OutcomeModel:
    """Linear-index binary choice with a neighbour-mean peer term.

    ``beta`` is ``(intercept, covariate coefficients..., peer coefficient)``,
    so ``len(beta) - 2`` covariates enter the index.
    """

    beta: tuple
    link: str = "probit"
    error_design: str = "iid"
    peer_stat: str = "lagged_neighbor_mean"

    def __post_init__(self):
        b = np.asarray(self.beta, dtype=float).ravel()
        if b.size < 2:
            raise ValueError("beta needs at least an intercept and a peer coefficient")
        if not np.all(np.isfinite(b)):
            raise ValueError("beta must be finite")
        if self.link not in LINKS:
            raise ValueError(f"unknown link {self.link!r}")
        if self.error_design not in ERROR_DESIGNS:
            raise ValueError(f"unknown error design {self.error_design!r}")
        if self.peer_stat not in PEER_STATS:
            raise ValueError(f"unknown peer statistic {self.peer_stat!r}")
        if self.link == "logit" and self.error_design == "neighbor_avg_weighted":
            raise ValueError("neighbor_avg_weighted errors are normal; use the probit link")
        object.__setattr__(self, "beta", tuple(float(v) for v in b))

    @property
    def k(self) -> int:
        return len(self.beta) - 2

    @property
    def intercept(self) -> float:
        return self.beta[0]

    @property
    def slopes(self) -> np.ndarray:
        return np.asarray(self.beta[1:-1])

    @property
    def peer(self) -> float:
        return self.beta[-1]

    def base_index(self, covariates, shocks) -> np.ndarray:
        """Index excluding the peer term: ``b1 + X'b2 + nu``."""
        x = np.asarray(covariates, dtype=float).reshape(len(shocks), -1)
        return self.intercept + x @ self.slopes + np.asarray(shocks, dtype=float)


def error_weights(degrees) -> np.ndarray:
    """``(1 + 1/deg)^(-1/2)``, and 1 for isolated agents."""
    deg = np.asarray(degrees, dtype=float)
    return np.where(deg > 0, 1.0 / np.sqrt(1.0 + 1.0 / np.maximum(deg, 1.0)), 1.0)


def draw_errors(graph: SpatialGraph, model: OutcomeModel, gen: np.random.Generator) -> np.ndarray:
    """One period of outcome-equation errors ``nu``."""
    n = graph.n
    if model.link == "logit":
        return gen.logistic(size=n)
    eps = gen.standard_normal(n)
    if model.error_design == "iid":
        return eps
    w = error_weights(graph.degrees)
    return np.where(graph.degrees > 0, w * (graph.neighbor_mean(eps) + eps), eps)


def simulate_covariates(n: int, k: int, T: int, gen: np.random.Generator) -> np.ndarray:
    """``X^0 ~ Exp(1)``, ``X^t = 0.5 X^{t-1} + N(0,1)``; shape (n, T+1, k)."""
    x = np.empty((n, T + 1, k))
    x[:, 0] = gen.exponential(1.0, size=(n, k))
    for t in range(1, T + 1):
        x[:, t] = 0.5 * x[:, t - 1] + gen.standard_normal((n, k))
    return x


def simulate_dynamic(graph: SpatialGraph, model: OutcomeModel, T: int, rng,
                     covariates: Optional[np.ndarray] = None) -> Panel:
    """Simulate the myopic dynamic model for periods ``0..T``.

    Period 0 is a single-agent choice (peer term zeroed); each later
    period responds to the neighbour mean of the previous period.
    """
    if T < 1:
        raise ValueError("T must be at least 1")
    if model.peer_stat != "lagged_neighbor_mean":
        raise ValueError("the dynamic model uses the lagged neighbour mean")
    gen = as_generator(rng)
    n = graph.n
    x = simulate_covariates(n, model.k, T, gen) if covariates is None else np.asarray(covariates, float)
    y = np.zeros((n, T + 1), dtype=np.int8)
    y[:, 0] = model.base_index(x[:, 0], draw_errors(graph, model, gen)) > 0
    for t in range(1, T + 1):
        peer = graph.neighbor_mean(y[:, t - 1])
        idx = model.base_index(x[:, t], draw_errors(graph, model, gen)) + model.peer * peer
        y[:, t] = idx > 0
    return Panel(y, x)


def best_response(graph: SpatialGraph, model: OutcomeModel, covariates, shocks, y) -> np.ndarray:
    base = model.base_index(covariates, shocks)
    return (base + model.peer * graph.neighbor_mean(y) > 0).astype(np.int8)


def best_response_fixed_point(graph: SpatialGraph, model: OutcomeModel, covariates, shocks,
                              init="all_ones", max_sweeps: Optional[int] = None):
    """Synchronous best-response iteration; returns ``(y, sweeps)``."""
    n = graph.n
    if isinstance(init, str):
        if init not in ("all_ones", "all_zeros"):
            raise ValueError(f"unknown init {init!r}")
        y = np.full(n, 1 if init == "all_ones" else 0, dtype=np.int8)
    else:
        y = np.asarray(init, dtype=np.int8).copy()
    cap = n + 50 if max_sweeps is None else max_sweeps
    base = model.base_index(covariates, shocks)
    for sweep in range(1, cap + 1):
        new = (base + model.peer * graph.neighbor_mean(y) > 0).astype(np.int8)
        if np.array_equal(new, y):
            return y, sweep
        y = new
    raise NonConvergenceError(f"best-response dynamics did not converge in {cap} sweeps")


@dataclass(frozen=True)
class StaticDraw:
    outcomes: np.ndarray
    covariates: np.ndarray
    shocks: np.ndarray
    sweeps: int


def simulate_static_best_response(graph: SpatialGraph, model: OutcomeModel, rng,
                                  init: str = "all_ones", max_sweeps: Optional[int] = None) -> StaticDraw:
    """Static game: draw types once and play best-response dynamics to a fixed point.

    From ``all_ones`` with a nonnegative peer coefficient the result is the
    largest Nash equilibrium.
    """
    if model.peer < 0 and init == "all_ones":
        raise ValueError("convergence to the largest equilibrium needs a nonnegative peer coefficient")
    gen = as_generator(rng)
    x = gen.exponential(1.0, size=(graph.n, model.k))
    nu = draw_errors(graph, model, gen)
    y, sweeps = best_response_fixed_point(graph, model, x, nu, init, max_sweeps)
    return StaticDraw(y, x, nu, sweeps)


def verify_nash(graph: SpatialGraph, model: OutcomeModel, shocks, y, covariates) -> bool:
    """True iff every agent's action is its best response to the others."""
    y = np.asarray(y, dtype=np.int8)
    return bool(np.array_equal(best_response(graph, model, covariates, shocks, y), y))


def enumerate_equilibria(graph: SpatialGraph, model: OutcomeModel, covariates, shocks) -> np.ndarray:
    """All pure-strategy equilibria by brute force (n <= 20); rows are outcome vectors."""
    n = graph.n
    if n > 20:
        raise ValueError("brute-force enumeration is limited to n <= 20")
    eq = [y for y in itertools.product((0, 1), repeat=n)
          if verify_nash(graph, model, shocks, np.array(y), covariates)]
    return np.array(eq, dtype=np.int8).reshape(-1, n)


def select_uniform(graph: SpatialGraph, model: OutcomeModel, covariates, shocks, rng) -> np.ndarray:
    """Pick an equilibrium uniformly at random (small games only)."""
    eq = enumerate_equilibria(graph, model, covariates, shocks)
    if len(eq) == 0:
        raise NonConvergenceError("no pure-strategy equilibrium")
    return eq[as_generator(rng).integers(len(eq))]


def compute_rc(model: OutcomeModel, shocks, covariates) -> np.ndarray:
    """Indicator that an agent's best response can flip as the peer mean moves over [0, 1]."""
    base = model.base_index(covariates, shocks)
    lo, hi = base, base + model.peer
    inf_u, sup_u = np.minimum(lo, hi), np.maximum(lo, hi)
    return ((inf_u <= 0) & (sup_u > 0)).astype(np.int8)


# ---------------------------------------------------------------------------
# agent statistics

MOMENT_KINDS = {
    "choice_prob": 0,
    "weighted_outcome": 0,
    "dyad_11": 1,
    "intransitive_triad_000": 2,
    "asf_bounds": 1,
}


@dataclass(frozen=True)
class MomentSpec:
    """Which agent statistic to compute.

    ``t`` is the period for the outcome-based kinds; ``x`` is the regressor
    value for ``asf_bounds``, ordered as (covariates..., lagged peer mean).
    """

    kind: str
    t: int = 1
    x: Optional[tuple] = None

    def __post_init__(self):
        if self.kind not in MOMENT_KINDS:
            raise ValueError(f"unknown moment kind {self.kind!r}")
        if self.kind == "asf_bounds" and self.x is None:
            raise ValueError("asf_bounds needs a regressor value x")

    @property
    def locality_K(self) -> int:
        return MOMENT_KINDS[self.kind]


@dataclass(frozen=True)
class MomentMatrix:
    psi: np.ndarray
    locality_K: int
    spec: MomentSpec

    @property
    def mean(self) -> np.ndarray:
        return self.psi.mean(axis=0)


def observed_regressors(panel: Panel, graph: SpatialGraph) -> np.ndarray:
    """(n, T+1, k+1) array of covariates and lagged neighbour mean; period 0 peer term is 0."""
    peer = np.zeros((panel.n, panel.periods))
    for t in range(1, panel.periods):
        peer[:, t] = graph.neighbor_mean(panel.outcomes[:, t - 1])
    return np.concatenate([panel.covariates, peer[:, :, None]], axis=2)


def asf_partition(regressors: np.ndarray, x) -> np.ndarray:
    """First period ``t in 1..T`` at which each agent's regressors equal ``x`` (0 if never)."""
    x = np.asarray(x, dtype=float)
    hit = np.all(regressors[:, 1:, :] == x, axis=2)
    first = np.where(hit.any(axis=1), hit.argmax(axis=1) + 1, 0)
    return first


def eval_moments(panel: Panel, graph: SpatialGraph, spec: MomentSpec) -> MomentMatrix:
    """Agent statistics ``psi_i`` as an (n, m) matrix."""
    if panel.n != graph.n:
        raise ValueError("panel and graph sizes differ")
    kind, t = spec.kind, spec.t
    if kind != "asf_bounds" and not 0 <= t <= panel.T:
        raise ValueError(f"period {t} outside 0..{panel.T}")
    Y = panel.outcomes.astype(float)
    A = graph.adjacency
    if kind == "choice_prob":
        psi = Y[:, t:t + 1]
    elif kind == "weighted_outcome":
        psi = (Y[:, t] * panel.covariates[:, t, 0])[:, None]
    elif kind == "dyad_11":
        psi = (Y[:, t] * (A @ Y[:, t]))[:, None]
    elif kind == "intransitive_triad_000":
        z = 1.0 - Y[:, t]
        Af = A.astype(float)
        Az = Af @ z
        # two-paths i-j-k with k != i, minus those closed by an i-k link
        open_paths = Af @ (z * Az) - z * Az
        psi = (z * (open_paths - _closed_paths(Af, z)))[:, None]
    else:
        if panel.T < 1:
            raise ValueError("asf_bounds needs T >= 1")
        if not np.array_equal(panel.covariates, np.round(panel.covariates)):
            raise ValueError("asf_bounds requires discretely supported (integer-valued) covariates")
        reg = observed_regressors(panel, graph)
        x = np.asarray(spec.x, dtype=float)
        if x.shape != (reg.shape[2],):
            raise ValueError(f"x must have {reg.shape[2]} entries (covariates, peer mean)")
        first = asf_partition(reg, x)
        yhat = np.where(first > 0, Y[np.arange(panel.n), first], 0.0)
        never = (first == 0).astype(float)
        psi = np.column_stack([yhat, never])
    return MomentMatrix(np.ascontiguousarray(psi, dtype=float), spec.locality_K, spec)


def _closed_paths(Af, z) -> np.ndarray:
    """``sum_j sum_k A_ij A_jk A_ik z_j z_k`` for every i."""
    Az = Af.multiply(z[None, :]).tocsr()
    return np.asarray(Az.multiply(Az @ Af).sum(axis=1)).ravel()
