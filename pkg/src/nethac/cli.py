"""Command-line entry point: ``nethac <subcommand> ...``.

Subcommands
-----------
simulate    draw a network and panel, write nodes/edges CSV and a manifest
estimate    fit the pseudo-ML model on a data bundle and report HAC standard errors
hac         HAC covariance of an agent statistic computed from a data bundle
mc-probit   Monte Carlo study of probit coefficient inference
mc-moment   Monte Carlo study of inference on the weighted period-1 outcome

Errors are reported as a single ``error: <code>: <message>`` line on stderr.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from dataclasses import asdict
from typing import Optional

import numpy as np

from . import __version__
from .core import Panel, RngSpec, stream_index
from .estim import EstimationError, dynamic_design, fit_pseudo_ml, sandwich_variance
from .graph import bounded_bfs
from .hac import HacConfig, estimate, iid_cov
from .io import (
    BundleError,
    DataBundle,
    config_hash,
    read_bundle,
    read_config,
    write_edges,
    write_json,
    write_nodes,
)
from .mc import (
    McConfig,
    FULL_ORACLE_REPS,
    FULL_REPS,
    run_probit_study,
    run_weighted_outcome_study,
    summarize,
)
from .netgen import NetGenConfig, RggModel, generate
from .simsocial import (
    MomentSpec,
    NonConvergenceError,
    OutcomeModel,
    eval_moments,
    simulate_dynamic,
    simulate_static_best_response,
)

log = logging.getLogger("nethac")

NS_SIMULATE = 7
DEFAULT_BETA = (0.5, -0.3, 1.0)


class CliError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


# ---------------------------------------------------------------------------
# option resolution: flag > environment (seed only) > config file > default


def _pick(flag, conf: dict, key: str, default=None):
    if flag is not None:
        return flag
    return conf.get(key, default)


def resolve_seed(args, conf: dict) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("NETHAC_SEED")
    if env is not None and env.strip():
        try:
            return int(env)
        except ValueError as err:
            raise CliError("invalid_argument", f"NETHAC_SEED must be an integer, got {env!r}") from err
    return int(conf.get("run.seed", 0))


def _float_list(text: Optional[str]):
    if text is None:
        return None
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as err:
        raise CliError("invalid_argument", f"expected comma-separated numbers, got {text!r}") from err


def _str_list(text):
    if text is None or isinstance(text, list):
        return text
    return [v.strip() for v in text.split(",") if v.strip()]


# ---------------------------------------------------------------------------
# simulate


def cmd_simulate(args) -> int:
    conf = read_config(args.config)
    seed = resolve_seed(args, conf)
    n = int(_pick(args.n, conf, "network.n", 500))
    d = int(_pick(args.d, conf, "network.d", 2))
    kappa = float(_pick(args.kappa, conf, "network.kappa", 5.0 / math.pi))
    threshold = float(_pick(args.threshold, conf, "network.threshold", 1.0))
    T = int(_pick(args.T, conf, "model.T", 1))
    static = bool(args.static or conf.get("model.static", False))
    beta = list(conf.get("model.beta", DEFAULT_BETA))
    for pos, flag in enumerate((args.beta1, args.beta2, args.beta3)):
        if flag is not None:
            beta[pos] = flag
    errors = _pick(args.errors, conf, "model.errors", "neighbor_avg_weighted")
    if static and beta[-1] < 0:
        raise CliError("precondition", "the static game needs a nonnegative peer coefficient (supermodularity)")
    try:
        net = NetGenConfig(n, d, kappa, RggModel(threshold))
        model = OutcomeModel(tuple(beta), "probit", errors,
                             "contemporaneous_neighbor_mean" if static else "lagged_neighbor_mean")
    except ValueError as err:
        raise CliError("invalid_config", str(err)) from err
    gen = RngSpec(seed, stream_index(NS_SIMULATE, n, 0)).generator()
    graph = generate(net, gen)
    if static:
        draw = simulate_static_best_response(graph, model, gen)
        panel = Panel(draw.outcomes[:, None], draw.covariates[:, None, :])
    else:
        panel = simulate_dynamic(graph, model, T, gen)
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    nodes, edges = os.path.join(out, "nodes.csv"), os.path.join(out, "edges.csv")
    write_nodes(nodes, graph.positions, panel)
    write_edges(edges, graph)
    settings = {"n": n, "d": d, "kappa": kappa, "threshold": threshold, "T": 0 if static else T,
                "static": static, "beta": beta, "errors": errors}
    write_json(os.path.join(out, "manifest.json"), {
        "command": "simulate", "version": __version__, "seed": seed,
        "config": settings, "config_hash": config_hash(settings),
        "files": {"nodes": "nodes.csv", "edges": "edges.csv"},
        "summary": {"n": n, "edges": int(graph.edges().shape[0]),
                    "mean_degree": float(graph.degrees.mean())},
    })
    log.info("wrote %d agents and %d edges to %s", n, graph.edges().shape[0], out)
    return 0


# ---------------------------------------------------------------------------
# estimate / hac shared pieces


def _hac_settings(args, conf: dict) -> dict:
    methods = _str_list(_pick(args.method, conf, "hac.methods", ["spatial", "network"]))
    grid = _float_list(args.bandwidth_grid) if args.bandwidth_grid else conf.get("hac.bandwidth_grid")
    bw = _pick(args.bandwidth, conf, "hac.bandwidth")
    if grid and bw is not None:
        raise CliError("invalid_argument", "use either --bandwidth or --bandwidth-grid")
    center = _pick(args.center, conf, "hac.center", "sample_mean")
    if center not in ("sample_mean", "known_zero"):
        raise CliError("invalid_argument", "center must be sample_mean or known_zero")
    return {
        "methods": methods,
        "bandwidths": grid if grid else [bw],
        "kernel": _pick(args.kernel, conf, "hac.kernel", "bartlett"),
        "theta_kernel": conf.get("hac.theta_kernel", "uniform"),
        "theta_bandwidth": conf.get("hac.theta_bandwidth"),
        "center": center,
        "psd_floor": _pick(args.psd_floor, conf, "hac.psd_floor"),
    }


def hac_estimates(psi, graph, settings: dict, has_edges: bool) -> list:
    """Every (method, bandwidth) combination requested, as HacEstimate objects."""
    out = []
    dist_cache = {}
    for method in settings["methods"]:
        if method == "network" and not has_edges:
            raise CliError("missing_edges", "network HAC needs an edges file (--edges)")
        for h in settings["bandwidths"]:
            try:
                cfg = HacConfig(method, settings["kernel"], h, settings["theta_bandwidth"],
                                settings["theta_kernel"], settings["center"], settings["psd_floor"])
            except ValueError as err:
                raise CliError("invalid_argument", str(err)) from err
            dist_map = None
            if method == "network":
                depth = int(math.ceil(cfg.resolve_bandwidth(graph.n)))
                if depth not in dist_cache:
                    dist_cache[depth] = bounded_bfs(graph, depth)
                dist_map = dist_cache[depth]
            out.append(estimate(psi, cfg, graph=graph, dist_map=dist_map))
    return out


def estimate_bundle(bundle: DataBundle, settings: dict, link: str = "probit", period: int = 1) -> dict:
    """Fit the dynamic design on a bundle and compute SEs for each HAC setting.

    This is the in-process core of the ``estimate`` subcommand.
    """
    if bundle.panel is None:
        raise CliError("invalid_input", "nodes file has no outcome columns")
    if "network" in settings["methods"] and bundle.edges is None:
        raise CliError("missing_edges", "network HAC needs an edges file (--edges)")
    graph = bundle.graph()
    try:
        y, X = dynamic_design(bundle.panel, graph, period)
    except ValueError as err:
        raise CliError("invalid_input", str(err)) from err
    fit = fit_pseudo_ml(y, X, link)
    names = ["const"] + [f"x{j}" for j in range(1, bundle.panel.k + 1)] + ["peer"]
    iid = iid_cov(fit.scores, settings["center"])
    results = []
    for est in hac_estimates(fit.scores, graph, settings, bundle.edges is not None):
        results.append({**est.to_dict(), "se": sandwich_variance(fit, est.sigma)[1].tolist()})
    return {
        "link": link,
        "period": period,
        "n": int(bundle.n),
        "names": names,
        "beta_hat": fit.beta_hat.tolist(),
        "fit": fit.to_dict(),
        "iid_se": sandwich_variance(fit, iid.sigma)[1].tolist(),
        "results": results,
    }


def cmd_estimate(args) -> int:
    conf = read_config(args.config)
    if not args.nodes:
        raise CliError("invalid_argument", "--nodes is required")
    bundle = read_bundle(args.nodes, args.edges)
    settings = _hac_settings(args, conf)
    link = _pick(args.link, conf, "model.link", "probit")
    result = estimate_bundle(bundle, settings, link, args.period)
    write_json(args.out or "-", result)
    return 0


def cmd_hac(args) -> int:
    conf = read_config(args.config)
    if not args.nodes:
        raise CliError("invalid_argument", "--nodes is required")
    bundle = read_bundle(args.nodes, args.edges)
    graph = bundle.graph()
    if args.psi:
        psi = np.loadtxt(args.psi, delimiter=",", skiprows=1, ndmin=2)
        if psi.shape[0] != bundle.n:
            raise CliError("invalid_input", "psi file must have one row per agent")
        label = os.path.basename(args.psi)
    else:
        if bundle.panel is None:
            raise CliError("invalid_input", "nodes file has no outcome columns")
        x = tuple(_float_list(args.x)) if args.x else None
        try:
            spec = MomentSpec(args.moment, args.t, x)
            psi = eval_moments(bundle.panel, graph, spec).psi
        except ValueError as err:
            raise CliError("invalid_argument", str(err)) from err
        label = args.moment
    settings = _hac_settings(args, conf)
    ests = hac_estimates(psi, graph, settings, bundle.edges is not None)
    write_json(args.out or "-", {"moment": label, "n": int(bundle.n), "mean": psi.mean(axis=0).tolist(),
                                 "estimates": [e.to_dict() for e in ests]})
    return 0


# ---------------------------------------------------------------------------
# Monte Carlo


def _mc_config(args, conf: dict) -> McConfig:
    seed = resolve_seed(args, conf)
    kw = {"master_seed": seed}
    n_list = args.n if args.n is not None else conf.get("mc.n_list")
    if n_list is not None:
        kw["n_list"] = tuple(int(v) for v in (n_list if isinstance(n_list, list) else _float_list(n_list)))
    for key, flag in (("reps", args.reps), ("oracle_reps", args.oracle_reps), ("workers", args.workers)):
        v = _pick(flag, conf, f"mc.{key}")
        if v is not None:
            kw[key] = int(v)
    if args.full_scale:
        kw["reps"], kw["oracle_reps"] = FULL_REPS, FULL_ORACLE_REPS
    for key in ("level", "chunk_size"):
        if f"mc.{key}" in conf:
            kw[key] = conf[f"mc.{key}"]
    kw["fixed_network"] = bool(args.fixed_network or conf.get("mc.fixed_network", False))
    methods = _str_list(_pick(args.method, conf, "mc.methods"))
    if methods:
        kw["methods"] = tuple(methods)
    kernel = _pick(args.kernel, conf, "hac.kernel")
    if kernel:
        kw["kernel"] = kernel
    if "hac.theta_kernel" in conf:
        kw["theta_kernel"] = conf["hac.theta_kernel"]
    center = _pick(args.center, conf, "mc.moment_center")
    if center:
        kw["moment_center"] = center
    bw = _pick(args.bandwidth, conf, "hac.bandwidth")
    if bw is not None:
        kw["bandwidths"] = {m: bw for m in ("spatial", "network", "generalized_spatial")}
    if "network.kappa" in conf:
        kw["kappa"] = conf["network.kappa"]
    if "network.threshold" in conf:
        kw["rgg_threshold"] = conf["network.threshold"]
    if "model.beta" in conf:
        kw["beta_true"] = tuple(conf["model.beta"])
    try:
        return McConfig(**kw)
    except ValueError as err:
        raise CliError("invalid_config", str(err)) from err


def _cmd_mc(args, study: str) -> int:
    conf = read_config(args.config)
    cfg = _mc_config(args, conf)
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    public = asdict(cfg)
    public.pop("workers")
    manifest = {"command": f"mc-{study}", "version": __version__, "seed": cfg.master_seed,
                "config": public, "config_hash": cfg.fingerprint(),
                "reps": cfg.reps, "oracle_reps": cfg.oracle_reps, "files": {}}
    if not args.dry_run:
        ck = args.checkpoint or os.path.join(out, f"checkpoint-{study}.jsonl")
        run = run_probit_study if study == "probit" else run_weighted_outcome_study
        report = run(cfg, checkpoint=ck)
        for fmt, name in (("json", "report.json"), ("csv", "report.csv"), ("table", "report.txt")):
            with open(os.path.join(out, name), "w") as fh:
                fh.write(summarize(report, fmt))
            manifest["files"][fmt] = name
        manifest["counts"] = report.counts
        print(summarize(report, "table"), end="")
    write_json(os.path.join(out, "manifest.json"), manifest)
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nethac", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="INI configuration file")
        sp.add_argument("--seed", type=int, help="master seed (overrides NETHAC_SEED and the config)")
        sp.add_argument("--out", help="output directory (simulate, mc-*) or JSON file (estimate, hac)")

    def hac_flags(sp):
        sp.add_argument("--method", help="comma-separated: iid, spatial, network, generalized_spatial")
        sp.add_argument("--bandwidth", type=float)
        sp.add_argument("--bandwidth-grid", help="comma-separated bandwidths, e.g. 0,1,2,3")
        sp.add_argument("--kernel", choices=("bartlett", "uniform"))
        sp.add_argument("--center", choices=("sample_mean", "known_zero"))
        sp.add_argument("--psd-floor", type=float)

    s = sub.add_parser("simulate", help="simulate a network and panel")
    common(s)
    s.add_argument("--n", type=int)
    s.add_argument("--d", type=int)
    s.add_argument("--kappa", type=float)
    s.add_argument("--threshold", type=float)
    s.add_argument("--T", type=int)
    s.add_argument("--beta1", type=float)
    s.add_argument("--beta2", type=float)
    s.add_argument("--beta3", type=float)
    s.add_argument("--errors", choices=("iid", "neighbor_avg_weighted"))
    s.add_argument("--static", action="store_true", help="static game solved by best-response dynamics")
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("estimate", help="pseudo-ML fit with HAC standard errors")
    common(e)
    e.add_argument("--nodes")
    e.add_argument("--edges")
    e.add_argument("--link", choices=("probit", "logit"))
    e.add_argument("--period", type=int, default=1)
    hac_flags(e)
    e.set_defaults(func=cmd_estimate)

    h = sub.add_parser("hac", help="HAC covariance of an agent statistic")
    common(h)
    h.add_argument("--nodes")
    h.add_argument("--edges")
    h.add_argument("--moment", default="weighted_outcome",
                   choices=("choice_prob", "weighted_outcome", "dyad_11", "intransitive_triad_000", "asf_bounds"))
    h.add_argument("--t", type=int, default=1)
    h.add_argument("--x", help="regressor value for asf_bounds, comma-separated")
    h.add_argument("--psi", help="CSV of agent statistics (header row, one row per agent)")
    hac_flags(h)
    h.set_defaults(func=cmd_hac)

    for name, study in (("mc-probit", "probit"), ("mc-moment", "moment")):
        m = sub.add_parser(name, help=f"Monte Carlo {study} study")
        common(m)
        m.add_argument("--n", type=lambda s: [int(v) for v in s.split(",")], help="comma-separated sizes")
        m.add_argument("--reps", type=int)
        m.add_argument("--oracle-reps", type=int)
        m.add_argument("--workers", type=int)
        m.add_argument("--full-scale", action="store_true", help="15000 replications and 7500 oracle draws")
        m.add_argument("--fixed-network", action="store_true", help="hold one network fixed across replications")
        m.add_argument("--checkpoint", help="JSON-lines checkpoint file (default: in --out)")
        m.add_argument("--dry-run", action="store_true", help="write the manifest without running")
        m.add_argument("--method", help="comma-separated subset of spatial, network, generalized_spatial, "
                                        "naive, oracle")
        m.add_argument("--bandwidth", type=float, help="one bandwidth for every HAC method")
        m.add_argument("--kernel", choices=("bartlett", "uniform"))
        m.add_argument("--center", choices=("sample_mean", "known_zero"),
                       help="centering of the weighted-outcome statistic (mc-moment)")
        m.set_defaults(func=lambda a, s=study: _cmd_mc(a, s))
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (CliError, BundleError, EstimationError, NonConvergenceError, OSError, ValueError) as err:
        print(f"error: {_error_code(err)}: {' '.join(str(err).split())}", file=sys.stderr)
        return 2


def _error_code(err: Exception) -> str:
    if isinstance(err, NonConvergenceError):
        return "nonconvergence"
    if hasattr(err, "code") and isinstance(err.code, str):
        return err.code
    if isinstance(err, OSError):
        return "io_error"
    return "invalid_argument"


if __name__ == "__main__":
    sys.exit(main())
