"""Probit/logit pseudo-maximum likelihood and sandwich variances."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, log_ndtr, ndtr, ndtri

from .core import Panel, SpatialGraph


class EstimationError(RuntimeError):
    code = "estimation_error"


class SeparationError(EstimationError):
    code = "separation"


class RankDeficiencyError(EstimationError):
    code = "rank_deficient"


class ConvergenceError(EstimationError):
    code = "nonconvergence"


@dataclass
class FitResult:
    """Pseudo-ML estimate together with per-observation scores and the total Hessian."""

    beta_hat: np.ndarray
    scores: np.ndarray
    hessian: np.ndarray
    link: str
    converged: bool
    iterations: int
    loglik: float
    loglik_path: list = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.scores.shape[0]

    def to_dict(self) -> dict:
        return {
            "link": self.link,
            "beta_hat": self.beta_hat.tolist(),
            "hessian": self.hessian.tolist(),
            "loglik": self.loglik,
            "converged": self.converged,
            "iterations": self.iterations,
            "n": self.n,
        }


_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


def _probit_parts(y, eta):
    """Log-likelihood terms, generalized residual and Hessian weight for the probit."""
    q = 2.0 * y - 1.0
    qe = q * eta
    logF = log_ndtr(qe)
    lam = q * np.exp(-0.5 * qe * qe - _LOG_SQRT_2PI - logF)
    w = lam * (lam + eta)
    return logF, lam, w


def _logit_parts(y, eta):
    p = expit(eta)
    q = 2.0 * y - 1.0
    logF = -np.logaddexp(0.0, -q * eta)
    return logF, y - p, p * (1.0 - p)


_PARTS = {"probit": _probit_parts, "logit": _logit_parts}


def cdf(link: str, eta):
    return ndtr(eta) if link == "probit" else expit(eta)


def loglik(beta, y, X, link="probit") -> float:
    return float(_PARTS[link](np.asarray(y, float), X @ beta)[0].sum())


def score_matrix(beta, y, X, link="probit") -> np.ndarray:
    """Per-observation score contributions ``s_i(beta)`` as an (n, m) matrix."""
    _, r, _ = _PARTS[link](np.asarray(y, float), X @ beta)
    return X * r[:, None]


def hessian(beta, y, X, link="probit") -> np.ndarray:
    """Hessian of the total log-likelihood."""
    _, _, w = _PARTS[link](np.asarray(y, float), X @ beta)
    return -(X * w[:, None]).T @ X


def fit_pseudo_ml(y, X, link: str = "probit", tol: float = 1e-8, max_iter: int = 100,
                  max_norm: float = 1e3) -> FitResult:
    """Newton-Raphson for the binary-choice (pseudo) likelihood.

    Steps are halved until the log-likelihood does not decrease (up to
    rounding). Stops when
    the sup-norm of the gradient falls below ``tol``.
    """
    if link not in _PARTS:
        raise ValueError(f"unknown link {link!r}")
    y = np.asarray(y, dtype=float).ravel()
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] != y.size:
        raise ValueError("X must be (n, m) with n = len(y)")
    if not np.isin(y, (0.0, 1.0)).all():
        raise ValueError("y must be binary")
    if y.min() == y.max():
        raise SeparationError("outcome is constant; the MLE does not exist")
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise RankDeficiencyError("design matrix does not have full column rank")
    parts = _PARTS[link]
    beta = np.zeros(X.shape[1])
    ll = float(parts(y, X @ beta)[0].sum())
    path = [ll]
    for it in range(1, max_iter + 1):
        _, r, w = parts(y, X @ beta)
        grad = X.T @ r
        if np.max(np.abs(grad)) < tol:
            return _finish(beta, y, X, link, it - 1, path)
        H = -(X * w[:, None]).T @ X
        try:
            step = np.linalg.solve(H, -grad)
        except np.linalg.LinAlgError as err:
            raise ConvergenceError("singular Hessian during Newton iterations") from err
        # accept rounding-level decreases near the optimum
        slack = 64 * np.finfo(float).eps * max(1.0, abs(ll))
        t = 1.0
        while True:
            cand = beta + t * step
            ll_new = float(parts(y, X @ cand)[0].sum())
            if ll_new >= ll - slack:
                break
            t *= 0.5
            if t < 1e-10:
                raise ConvergenceError("step halving failed to increase the log-likelihood")
        beta, ll = cand, ll_new
        path.append(ll)
        if np.linalg.norm(beta) > max_norm:
            raise SeparationError("coefficients diverge; the data appear separated")
    _, r, _ = parts(y, X @ beta)
    if np.max(np.abs(X.T @ r)) < tol:
        return _finish(beta, y, X, link, max_iter, path)
    raise ConvergenceError(f"Newton-Raphson did not converge in {max_iter} iterations")


def _finish(beta, y, X, link, iterations, path) -> FitResult:
    logF = _PARTS[link](y, X @ beta)[0]
    if np.all(logF > -1e-6):
        # the gradient can vanish numerically before the coefficients diverge
        raise SeparationError("every observation is fitted with probability 1; the data are separated")
    return FitResult(
        beta_hat=beta,
        scores=score_matrix(beta, y, X, link),
        hessian=hessian(beta, y, X, link),
        link=link,
        converged=True,
        iterations=iterations,
        loglik=path[-1],
        loglik_path=path,
    )


def sandwich_variance(fit: FitResult, S_hat):
    """``Hbar^-1 S Hbar^-1 / n`` with ``Hbar = hessian / n``.

    ``S_hat`` estimates ``Var(n^-1/2 sum_i s_i)``; with the i.i.d. score
    covariance this is the usual heteroskedasticity-robust variance.
    Returns ``(V, se)``.
    """
    S_hat = np.atleast_2d(np.asarray(S_hat, dtype=float))
    n = fit.n
    Hbar = fit.hessian / n
    if S_hat.shape != Hbar.shape:
        raise ValueError("S_hat shape does not match the Hessian")
    try:
        Hinv = np.linalg.inv(Hbar)
    except np.linalg.LinAlgError as err:
        raise EstimationError("average Hessian is singular") from err
    V = Hinv @ S_hat @ Hinv / n
    V = 0.5 * (V + V.T)
    return V, np.sqrt(np.clip(np.diag(V), 0.0, None))


def critical_value(level: float = 0.05) -> float:
    return float(ndtri(1.0 - level / 2.0))


def t_test(beta_hat, se, beta_null, level: float = 0.05) -> np.ndarray:
    """Two-sided t-test rejections, coordinate by coordinate."""
    se = np.asarray(se, dtype=float)
    if np.any(se <= 0):
        raise ValueError("standard errors must be positive")
    t = np.abs(np.asarray(beta_hat, float) - np.asarray(beta_null, float)) / se
    return t > critical_value(level)


def dynamic_design(panel: Panel, graph: SpatialGraph, t: int = 1):
    """Period-``t`` outcome and design ``(1, X^t, neighbour mean of Y^{t-1})``."""
    if not 1 <= t <= panel.T:
        raise ValueError(f"period {t} outside 1..{panel.T}")
    peer = graph.neighbor_mean(panel.outcomes[:, t - 1])
    X = np.column_stack([np.ones(panel.n), panel.covariates[:, t, :], peer])
    return panel.outcomes[:, t].astype(float), X
