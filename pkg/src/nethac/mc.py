"""Monte Carlo harness for the dynamic probit design.

Each replication draws fresh positions, a random geometric graph and a
two-period panel from its own random stream, so results do not depend on
worker count or execution order. Aggregation is an ordered fold over
replication indices.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .core import RngSpec, stream_index
from .estim import (
    EstimationError,
    SeparationError,
    critical_value,
    dynamic_design,
    fit_pseudo_ml,
    sandwich_variance,
    score_matrix,
)
from .graph import bounded_bfs
from .hac import HacConfig, default_bandwidth, estimate
from .netgen import NetGenConfig, RggModel, generate
from .simsocial import OutcomeModel, simulate_dynamic

log = logging.getLogger(__name__)

HAC_METHODS = ("spatial", "network", "generalized_spatial")
ALL_METHODS = HAC_METHODS + ("naive", "oracle")
FULL_REPS, FULL_ORACLE_REPS = 15000, 7500
MAX_ATTEMPTS = 255

# stream namespaces
NS_PROBIT, NS_PROBIT_ORACLE, NS_MOMENT, NS_MOMENT_ORACLE, NS_NETWORK, NS_SCORE = 1, 2, 3, 4, 5, 6


@dataclass(frozen=True)
class McConfig:
    """Design constants and run controls.

    The default density ``kappa = 5/pi`` gives expected degree five under the
    unit-radius random geometric graph.
    """

    n_list: tuple = (500, 1000, 2000)
    reps: int = 2000
    oracle_reps: int = 2000
    beta_true: tuple = (0.5, -0.3, 1.0)
    kappa: float = 5.0 / math.pi
    rgg_threshold: float = 1.0
    d: int = 2
    methods: tuple = ALL_METHODS
    level: float = 0.05
    master_seed: int = 0
    kernel: str = "bartlett"
    theta_kernel: str = "uniform"
    moment_center: str = "sample_mean"
    bandwidths: tuple = ()
    fixed_network: bool = False
    workers: int = 1
    chunk_size: int = 50

    def __post_init__(self):
        object.__setattr__(self, "n_list", tuple(int(n) for n in self.n_list))
        object.__setattr__(self, "methods", tuple(self.methods))
        object.__setattr__(self, "beta_true", tuple(float(b) for b in self.beta_true))
        object.__setattr__(self, "bandwidths", tuple(tuple(kv) for kv in dict(self.bandwidths).items()))
        if not self.n_list:
            raise ValueError("n_list must be nonempty")
        if self.reps < 1 or self.oracle_reps < 1:
            raise ValueError("reps and oracle_reps must be at least 1")
        if not self.methods:
            raise ValueError("at least one method is required")
        bad = set(self.methods) - set(ALL_METHODS)
        if bad:
            raise ValueError(f"unknown methods {sorted(bad)}")
        if self.moment_center not in ("sample_mean", "known_zero"):
            raise ValueError("moment_center must be 'sample_mean' or 'known_zero'")
        if not 0 < self.level < 1:
            raise ValueError("level must be in (0, 1)")

    @classmethod
    def full_scale(cls, **kw) -> "McConfig":
        return cls(reps=FULL_REPS, oracle_reps=FULL_ORACLE_REPS, **kw)

    def bandwidth(self, method: str, n: int) -> float:
        bw = dict(self.bandwidths)
        return float(bw[method]) if method in bw else default_bandwidth(method, n, self.d)

    def hac_config(self, method: str, n: int, center="sample_mean") -> HacConfig:
        if method == "naive":
            return HacConfig("iid", center=center)
        return HacConfig(method, self.kernel, self.bandwidth(method, n),
                         theta_kernel=self.theta_kernel, center=center)

    def fingerprint(self) -> str:
        keep = {k: v for k, v in asdict(self).items() if k not in ("workers", "chunk_size")}
        return hashlib.sha256(json.dumps(keep, sort_keys=True, default=list).encode()).hexdigest()[:16]


@dataclass
class McReport:
    """Aggregated Monte Carlo results.

    ``rows`` holds one dict per (n, method, coordinate) with ``mean_se``,
    ``reject_pct``, ``oracle_se``, ``true_value`` and ``mean_estimate``.
    """

    study: str
    rows: list
    counts: dict
    seed: int
    config: dict = field(default_factory=dict)

    def row(self, n: int, method: str, coordinate: str) -> dict:
        for r in self.rows:
            if r["n"] == n and r["method"] == method and r["coordinate"] == coordinate:
                return r
        raise KeyError((n, method, coordinate))

    def to_dict(self) -> dict:
        return {"study": self.study, "seed": self.seed, "counts": self.counts,
                "config": self.config, "rows": self.rows}


# ---------------------------------------------------------------------------
# single replications


def draw_sample(cfg: McConfig, n: int, namespace: int, rep: int):
    """Draw the network and panel for one replication; redraws on separation.

    Returns ``(graph, panel, fit, attempts)`` where ``fit`` is the probit fit
    of the period-1 outcome (needed to detect degenerate draws).
    """
    model = OutcomeModel(cfg.beta_true, "probit", "neighbor_avg_weighted")
    net = NetGenConfig(n, cfg.d, cfg.kappa, RggModel(cfg.rgg_threshold))
    fixed = None
    if cfg.fixed_network:
        fixed = generate(net, RngSpec(cfg.master_seed, stream_index(NS_NETWORK, n, 0)))
    for attempt in range(MAX_ATTEMPTS):
        gen = RngSpec(cfg.master_seed, stream_index(namespace, n, rep, attempt)).generator()
        graph = fixed if fixed is not None else generate(net, gen)
        panel = simulate_dynamic(graph, model, 1, gen)
        y, X = dynamic_design(panel, graph)
        try:
            fit = fit_pseudo_ml(y, X, "probit")
        except SeparationError:
            continue
        return graph, panel, fit, attempt
    raise EstimationError(f"replication {rep} degenerate after {MAX_ATTEMPTS} attempts")


def _hac_sigmas(psi, graph, cfg: McConfig, n: int, methods, center="sample_mean") -> dict:
    out = {}
    dist_map = None
    if "network" in methods:
        dist_map = bounded_bfs(graph, int(math.ceil(cfg.bandwidth("network", n))))
    for m in methods:
        if m == "oracle":
            continue
        out[m] = estimate(psi, cfg.hac_config(m, n, center), graph=graph, dist_map=dist_map).sigma
    return out


def probit_replication(cfg: McConfig, n: int, rep: int, oracle: bool = False) -> dict:
    graph, panel, fit, attempts = draw_sample(cfg, n, NS_PROBIT_ORACLE if oracle else NS_PROBIT, rep)
    rec = {"rep": rep, "redraws": attempts, "beta_hat": fit.beta_hat.tolist()}
    if oracle:
        return rec
    se, min_eig = {}, {}
    for m, S in _hac_sigmas(fit.scores, graph, cfg, n, cfg.methods).items():
        se[m] = sandwich_variance(fit, S)[1].tolist()
        min_eig[m] = float(np.linalg.eigvalsh(S)[0])
    rec["se"] = se
    rec["min_eig"] = min_eig
    return rec


def moment_replication(cfg: McConfig, n: int, rep: int, oracle: bool = False) -> dict:
    graph, panel, _, attempts = draw_sample(cfg, n, NS_MOMENT_ORACLE if oracle else NS_MOMENT, rep)
    psi = panel.outcomes[:, 1] * panel.covariates[:, 1, 0]
    rec = {"rep": rep, "redraws": attempts, "psi_bar": float(psi.mean())}
    if oracle:
        return rec
    rec["se"] = {m: float(math.sqrt(max(S[0, 0], 0.0) / n))
                 for m, S in _hac_sigmas(psi[:, None], graph, cfg, n, cfg.methods, cfg.moment_center).items()}
    return rec


def score_replication(cfg: McConfig, n: int, rep: int) -> dict:
    """Scores at the true coefficients: scaled sum and HAC estimates of its variance."""
    graph, panel, _, attempts = draw_sample(cfg, n, NS_SCORE, rep)
    y, X = dynamic_design(panel, graph)
    s = score_matrix(np.asarray(cfg.beta_true), y, X, "probit")
    methods = [m for m in cfg.methods if m in HAC_METHODS or m == "naive"]
    sig = _hac_sigmas(s, graph, cfg, n, methods, center="known_zero")
    return {"rep": rep, "redraws": attempts, "scaled_sum": (s.sum(axis=0) / math.sqrt(n)).tolist(),
            "sigma": {m: S.ravel().tolist() for m, S in sig.items()}}


_KINDS: dict[str, Callable] = {
    "probit": lambda c, n, r: probit_replication(c, n, r),
    "probit_oracle": lambda c, n, r: probit_replication(c, n, r, oracle=True),
    "moment": lambda c, n, r: moment_replication(c, n, r),
    "moment_oracle": lambda c, n, r: moment_replication(c, n, r, oracle=True),
    "score": lambda c, n, r: score_replication(c, n, r),
}


def _run_chunk(args):
    cfg, kind, n, reps = args
    fn = _KINDS[kind]
    return [fn(cfg, n, r) for r in reps]


# ---------------------------------------------------------------------------
# execution with optional checkpointing


class Checkpoint:
    """Append-only JSON-lines store of finished replication records."""

    def __init__(self, path: str, fingerprint: str):
        self.path = path
        self.records: dict = {}
        if os.path.exists(path):
            with open(path) as fh:
                lines = fh.read().splitlines()
            if lines:
                head = json.loads(lines[0])
                if head.get("fingerprint") != fingerprint:
                    raise ValueError(f"checkpoint {path} was written for a different configuration")
            for line in lines[1:]:
                try:
                    item = json.loads(line)
                except json.JSONDecodeError:
                    break  # torn final line from an interrupted write
                self.records[tuple(item["key"])] = item["record"]
            # rewrite so a torn tail does not survive the next append
            self._rewrite(fingerprint)
        else:
            self._rewrite(fingerprint)

    def _rewrite(self, fingerprint):
        tmp = self.path + ".tmp"
        with open(tmp, "w") as fh:
            fh.write(json.dumps({"fingerprint": fingerprint}) + "\n")
            for key, rec in self.records.items():
                fh.write(json.dumps({"key": list(key), "record": rec}) + "\n")
        os.replace(tmp, self.path)

    def add(self, kind: str, n: int, records: list):
        with open(self.path, "a") as fh:
            for rec in records:
                key = (kind, n, rec["rep"])
                self.records[key] = rec
                fh.write(json.dumps({"key": list(key), "record": rec}) + "\n")
            fh.flush()


def run_replications(cfg: McConfig, kind: str, n: int, count: int,
                     checkpoint: Optional[Checkpoint] = None) -> list:
    """Run replications ``0..count-1`` of ``kind``; returns records ordered by index."""
    done = {}
    if checkpoint is not None:
        done = {k[2]: v for k, v in checkpoint.records.items() if k[0] == kind and k[1] == n and k[2] < count}
    todo = [r for r in range(count) if r not in done]
    chunks = [todo[i:i + cfg.chunk_size] for i in range(0, len(todo), cfg.chunk_size)]
    tasks = [(cfg, kind, n, c) for c in chunks]

    def absorb(records):
        for rec in records:
            done[rec["rep"]] = rec
        if checkpoint is not None:
            checkpoint.add(kind, n, records)

    if cfg.workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            for records in pool.map(_run_chunk, tasks):
                absorb(records)
    else:
        for t in tasks:
            absorb(_run_chunk(t))
    log.info("%s n=%d: %d replications", kind, n, count)
    return [done[r] for r in range(count)]


def _open_checkpoint(cfg: McConfig, study: str, path: Optional[str]):
    return Checkpoint(path, f"{study}:{cfg.fingerprint()}") if path else None


# ---------------------------------------------------------------------------
# studies

COORDS = ("beta1", "beta2", "beta3")


def run_probit_study(cfg: McConfig, checkpoint: Optional[str] = None) -> McReport:
    """Standard errors and t-test rejection rates for the probit coefficients."""
    ck = _open_checkpoint(cfg, "probit", checkpoint)
    z = critical_value(cfg.level)
    beta0 = np.asarray(cfg.beta_true)
    rows, counts = [], {}
    for n in cfg.n_list:
        main = run_replications(cfg, "probit", n, cfg.reps, ck)
        orc = run_replications(cfg, "probit_oracle", n, cfg.oracle_reps, ck) if "oracle" in cfg.methods else []
        bhat = np.array([r["beta_hat"] for r in main])
        oracle_se = np.std([r["beta_hat"] for r in orc], axis=0, ddof=1) if len(orc) > 1 else np.full(3, np.nan)
        counts[str(n)] = {"reps": cfg.reps, "oracle_reps": len(orc),
                          "redraws": int(sum(r["redraws"] for r in main) + sum(r["redraws"] for r in orc)),
                          "min_eig": {m: float(min(r["min_eig"][m] for r in main)) for m in main[0]["min_eig"]}}
        for m in cfg.methods:
            se = np.tile(oracle_se, (len(main), 1)) if m == "oracle" else np.array([r["se"][m] for r in main])
            reject = np.abs(bhat - beta0) / se > z
            for k, c in enumerate(COORDS):
                rows.append({"n": n, "method": m, "coordinate": c,
                             "mean_se": float(se[:, k].mean()),
                             "reject_pct": float(100.0 * reject[:, k].mean()),
                             "oracle_se": float(oracle_se[k]),
                             "true_value": float(beta0[k]),
                             "mean_estimate": float(bhat[:, k].mean())})
    return McReport("probit", rows, counts, cfg.master_seed, _public_config(cfg))


def run_weighted_outcome_study(cfg: McConfig, checkpoint: Optional[str] = None) -> McReport:
    """Inference on the mean of ``Y^1 X^1``; truth and oracle SE from separate draws."""
    ck = _open_checkpoint(cfg, "moment", checkpoint)
    z = critical_value(cfg.level)
    rows, counts = [], {}
    for n in cfg.n_list:
        main = run_replications(cfg, "moment", n, cfg.reps, ck)
        orc = run_replications(cfg, "moment_oracle", n, cfg.oracle_reps, ck)
        est = np.array([r["psi_bar"] for r in main])
        obar = np.array([r["psi_bar"] for r in orc])
        truth = float(obar.mean())
        oracle_se = float(obar.std(ddof=1)) if len(obar) > 1 else float("nan")
        counts[str(n)] = {"reps": cfg.reps, "oracle_reps": cfg.oracle_reps,
                          "redraws": int(sum(r["redraws"] for r in main) + sum(r["redraws"] for r in orc))}
        for m in cfg.methods:
            se = np.full(len(main), oracle_se) if m == "oracle" else np.array([r["se"][m] for r in main])
            with np.errstate(divide="ignore", invalid="ignore"):
                reject = np.abs(est - truth) / se > z
            rows.append({"n": n, "method": m, "coordinate": "mean",
                         "mean_se": float(se.mean()),
                         "reject_pct": float(100.0 * reject.mean()),
                         "oracle_se": oracle_se,
                         "true_value": truth,
                         "mean_estimate": float(est.mean())})
    return McReport("weighted_outcome", rows, counts, cfg.master_seed, _public_config(cfg))


def run_score_variance_study(cfg: McConfig, n: int, checkpoint: Optional[str] = None) -> dict:
    """Compare average HAC estimates of the score variance with its simulated value.

    Scores are evaluated at the true coefficients (mean zero), so the HAC
    estimators use a known zero centre. Returns the simulated variance, the
    mean estimate per method and its relative Frobenius error.
    """
    ck = _open_checkpoint(cfg, "score", checkpoint)
    recs = run_replications(cfg, "score", n, cfg.reps, ck)
    sums = np.array([r["scaled_sum"] for r in recs])
    m = sums.shape[1]
    truth = sums.T @ sums / len(sums)
    out = {"n": n, "reps": len(recs), "oracle": truth.tolist(), "methods": {}}
    for meth in recs[0]["sigma"]:
        mean = np.mean([np.reshape(r["sigma"][meth], (m, m)) for r in recs], axis=0)
        err = float(np.linalg.norm(mean - truth) / np.linalg.norm(truth))
        out["methods"][meth] = {"mean_sigma": mean.tolist(), "rel_frobenius_error": err}
    return out


def _public_config(cfg: McConfig) -> dict:
    d = asdict(cfg)
    d["bandwidths"] = {m: cfg.bandwidth(m, n) for m in HAC_METHODS for n in [cfg.n_list[0]]}
    d["bandwidth_overrides"] = dict(cfg.bandwidths)
    d.pop("workers")
    d.pop("chunk_size")
    d["n_list"] = list(cfg.n_list)
    d["methods"] = list(cfg.methods)
    d["beta_true"] = list(cfg.beta_true)
    return d


# ---------------------------------------------------------------------------
# rendering

METHOD_LABELS = {"spatial": "Spatial HAC", "network": "Network HAC", "generalized_spatial": "GS HAC",
                 "oracle": "Oracle", "naive": "Naive"}
CSV_FIELDS = ("study", "n", "method", "coordinate", "mean_se", "reject_pct", "oracle_se",
              "true_value", "mean_estimate")


def summarize(report: McReport, fmt: str = "table") -> str:
    """Render a report as an aligned text table, CSV or JSON."""
    if fmt not in ("table", "csv", "json"):
        raise ValueError(f"unknown format {fmt!r}")
    if not report.rows:
        raise ValueError("report has no rows")
    if fmt == "json":
        return json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
        w.writeheader()
        for r in report.rows:
            w.writerow({"study": report.study, **{k: _fmt(r[k]) for k in CSV_FIELDS[1:]}})
        return buf.getvalue()
    return _text_table(report)


def _fmt(v):
    return repr(v) if isinstance(v, float) else v


def _ordered(values, reference):
    return [v for v in reference if v in values]


def _text_table(report: McReport) -> str:
    ns = sorted({r["n"] for r in report.rows})
    methods = _ordered({r["method"] for r in report.rows}, ALL_METHODS)
    coords = _ordered({r["coordinate"] for r in report.rows}, COORDS + ("mean",))
    # cell width per method so the group label always fits
    width = {m: max(9, -(-(len(METHOD_LABELS[m]) + 2) // len(ns))) for m in methods}
    cols = [(m, n) for m in methods for n in ns]
    head1 = f"{'':<10}" + "".join(f"{METHOD_LABELS[m]:>{width[m] * len(ns)}}" for m in methods)
    head2 = f"{'':<10}" + "".join(f"{_nlabel(n):>{width[m]}}" for m, n in cols)
    blocks = []
    for title, key, digits in (("Standard errors", "mean_se", 3), ("Rejection %", "reject_pct", 2)):
        lines = [f"{report.study}: {title}", head1, head2]
        for c in coords:
            cells = []
            for m, n in cols:
                try:
                    cells.append(f"{report.row(n, m, c)[key]:>{width[m]}.{digits}f}")
                except KeyError:
                    cells.append(" " * width[m])
            lines.append(f"{c:<10}" + "".join(cells))
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"


def _nlabel(n: int) -> str:
    return f"{n // 1000}k" if n >= 1000 and n % 1000 == 0 else str(n)


def with_overrides(cfg: McConfig, **kw) -> McConfig:
    return replace(cfg, **{k: v for k, v in kw.items() if v is not None})
