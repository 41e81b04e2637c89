"""Acceptance criteria, each checked at its stated tolerance.

Every test records one ``PASS``/``FAIL`` line, printed at the end of the run
(and immediately when pytest runs with ``-s``). The Monte Carlo studies run
at desk scale: 2000 replications and 2000 oracle draws.
"""

import json
import math
import time

import numpy as np
import pytest

import conftest
from conftest import brute_force_equilibria, floyd_warshall, path_graph, random_graph
from test_hac import naive_gs, naive_network, naive_spatial
from nethac.cli import main
from nethac.estim import hessian, loglik, score_matrix
from nethac.graph import bounded_bfs, strategic_neighborhoods
from nethac.hac import generalized_spatial_hac, iid_cov, network_hac, psd_floor, spatial_hac
from nethac.mc import McConfig, run_probit_study, run_score_variance_study, run_weighted_outcome_study
from nethac.netgen import NetGenConfig, generate
from nethac.simsocial import OutcomeModel, best_response_fixed_point, compute_rc, verify_nash

REPS = 2000
SEED = 20240601
STATIC = dict(link="probit", error_design="iid", peer_stat="contemporaneous_neighbor_mean")


def record(number, ok, detail):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
    conftest.ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def _fmt(v):
    return "(" + ", ".join(f"{x:.4f}" for x in v) + ")"


@pytest.fixture(scope="module")
def probit_report():
    return run_probit_study(McConfig(n_list=(500,), reps=REPS, oracle_reps=REPS, master_seed=SEED))


@pytest.fixture(scope="module")
def moment_reports():
    base = McConfig(n_list=(500,), reps=REPS, oracle_reps=REPS, master_seed=SEED)
    return (run_weighted_outcome_study(base),
            run_weighted_outcome_study(McConfig(**{**base.__dict__, "moment_center": "known_zero"})))


COORDS = ("beta1", "beta2", "beta3")


def test_criterion_1_probit_standard_errors(probit_report):
    targets = {"spatial": (0.16, 0.06, 0.26), "network": (0.17, 0.06, 0.27)}
    ok, parts = True, []
    for m, want in targets.items():
        got = [probit_report.row(500, m, c)["mean_se"] for c in COORDS]
        ok &= all(abs(g - w) <= 0.02 for g, w in zip(got, want))
        parts.append(f"{m} SE {_fmt(got)} vs {want} +/-0.02")
    assert record(1, ok, "; ".join(parts))


def test_criterion_2_probit_rejection_rates(probit_report):
    rej = {m: [probit_report.row(500, m, c)["reject_pct"] for c in COORDS]
           for m in ("oracle", "naive", "spatial", "network", "generalized_spatial")}
    checks = [all(3.5 <= r <= 6.5 for r in rej["oracle"]),
              rej["naive"][0] > 10 and rej["naive"][2] > 10,
              all(5 <= r <= 11 for m in ("spatial", "network", "generalized_spatial") for r in rej[m])]
    detail = "; ".join(f"{m} {_fmt(v)}%" for m, v in rej.items())
    assert record(2, all(checks), detail)


def test_criterion_3_weighted_outcome(moment_reports):
    centred, uncentred = moment_reports
    r = {m: centred.row(500, m, "mean") for m in ("spatial", "network", "generalized_spatial", "oracle")}
    checks = [r["spatial"]["reject_pct"] < 3, r["network"]["reject_pct"] < 3,
              4 <= r["generalized_spatial"]["reject_pct"] <= 9,
              abs(r["oracle"]["mean_se"] - 0.05) <= 0.01]
    # informational: the same study with uncentred HAC sums; not part of the verdict
    u = {m: uncentred.row(500, m, "mean") for m in ("spatial", "network", "generalized_spatial")}
    info = ", ".join(f"{m} {u[m]['reject_pct']:.2f}% (SE {u[m]['mean_se']:.4f})" for m in u)
    conftest.ACCEPTANCE_LINES.append(f"  (info) known-zero centering: {info}")
    detail = (f"reject spatial {r['spatial']['reject_pct']:.2f}% network {r['network']['reject_pct']:.2f}% "
              f"(need < 3); GS {r['generalized_spatial']['reject_pct']:.2f}% (need 4..9); "
              f"oracle SE {r['oracle']['mean_se']:.4f} (need 0.05 +/-0.01)")
    assert record(3, all(checks), detail)


def test_criterion_4_score_variance_consistency():
    cfg = McConfig(n_list=(2000,), reps=REPS, master_seed=SEED, methods=("spatial", "network"))
    out = run_score_variance_study(cfg, 2000)
    errs = {m: out["methods"][m]["rel_frobenius_error"] for m in ("spatial", "network")}
    detail = ", ".join(f"{m} rel. Frobenius error {e:.4f}" for m, e in errs.items()) + " (need < 0.15)"
    assert record(4, all(e < 0.15 for e in errs.values()), detail)


def test_criterion_5_oracle_suites():
    start = time.perf_counter()
    fails = {}
    # bounded BFS vs Floyd-Warshall
    bad = 0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(5, 61))
        g = random_graph(n, rng.uniform(0.02, 0.2), rng)
        full = floyd_warshall(g.adjacency.toarray())
        for depth in (1, 3, n):
            bad += not np.array_equal(bounded_bfs(g, depth).to_dense(), np.where(full <= depth, full, np.inf))
    fails["bfs"] = bad
    # HAC vs double sums
    bad = 0
    for seed in range(10):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(5, 51))
        g = random_graph(n, rng.uniform(0.05, 0.3), rng)
        psi = rng.normal(size=(n, 2))
        for h in (0.8, 2.0):
            bad += not np.allclose(spatial_hac(psi, g.positions, bandwidth=h).sigma,
                                   naive_spatial(psi, g.positions, h), rtol=1e-10, atol=1e-12)
            bad += not np.allclose(network_hac(psi, g, bandwidth=h).sigma,
                                   naive_network(psi, g.adjacency.toarray(), h), rtol=1e-10, atol=1e-12)
            bad += not np.allclose(generalized_spatial_hac(psi, g.positions, bandwidth=h, theta_bandwidth=0.5).sigma,
                                   naive_gs(psi, g.positions, h, 0.5), rtol=1e-10, atol=1e-12)
    fails["hac"] = bad
    # best response from all-ones vs brute-force Nash enumeration
    bad = 0
    for inst in range(200):
        rng = np.random.default_rng(inst)
        n = int(rng.integers(2, 13))
        g = random_graph(n, rng.uniform(0.1, 0.6), rng)
        m = OutcomeModel((rng.normal(0, 0.5), rng.normal(0, 0.5), rng.uniform(0, 3)), **STATIC)
        x, nu = rng.exponential(size=(n, 1)), rng.standard_normal(n)
        y, _ = best_response_fixed_point(g, m, x, nu, "all_ones")
        eq = brute_force_equilibria(g.adjacency.toarray(), m.base_index(x, nu), m.peer)
        bad += not (len(eq) and verify_nash(g, m, nu, y, x) and np.array_equal(y, eq.max(axis=0)))
    fails["nash"] = bad
    # strategic neighborhoods are self-contained subgames
    bad = 0
    for seed in range(20):
        rng = np.random.default_rng(100 + seed)
        n = int(rng.integers(20, 201))
        g = generate(NetGenConfig(n, 2, 5 / math.pi), rng)
        m = OutcomeModel((rng.normal(0, 0.5), rng.normal(0, 0.5), rng.uniform(0.5, 2.0)), **STATIC)
        x, nu = rng.exponential(size=(n, 1)), rng.standard_normal(n)
        part = strategic_neighborhoods(g, compute_rc(m, nu, x))
        for init in ("all_ones", "all_zeros"):
            y, _ = best_response_fixed_point(g, m, x, nu, init)
            bad += sum(not verify_nash(g.subgraph(b), m, nu[b], y[b], x[b]) for b in part.blocks)
    fails["snprop"] = bad
    # score and Hessian vs central differences
    bad = 0
    rng = np.random.default_rng(1)
    for link in ("probit", "logit"):
        for _ in range(10):
            X = np.column_stack([np.ones(300), rng.normal(size=(300, 2))])
            y = (X @ [0.2, 0.5, -0.4] + rng.standard_normal(300) > 0).astype(float)
            b = rng.normal(0, 0.7, 3)
            E = np.eye(3) * 1e-5
            fd_g = np.array([(loglik(b + e, y, X, link) - loglik(b - e, y, X, link)) / 2e-5 for e in E])
            g_ = score_matrix(b, y, X, link).sum(0)
            fd_h = np.column_stack([(score_matrix(b + e, y, X, link).sum(0) - score_matrix(b - e, y, X, link).sum(0))
                                    / 2e-5 for e in E])
            H = hessian(b, y, X, link)
            bad += np.linalg.norm(fd_g - g_) / np.linalg.norm(g_) >= 1e-6
            bad += np.linalg.norm(fd_h - H) / np.linalg.norm(H) >= 1e-6
    fails["finite_diff"] = int(bad)
    elapsed = time.perf_counter() - start
    ok = not any(fails.values()) and elapsed < 60
    detail = ", ".join(f"{k} {v} mismatches" for k, v in fails.items()) + f"; {elapsed:.1f} s (need < 60)"
    assert record(5, ok, detail)


def test_criterion_6_exact_reductions():
    rng = np.random.default_rng(6)
    g = random_graph(50, 0.1, rng)
    psi = rng.normal(size=(50, 3))
    base = iid_cov(psi).sigma
    dev = max(np.max(np.abs(spatial_hac(psi, g.positions, bandwidth=1e-9).sigma - base)),
              np.max(np.abs(network_hac(psi, g, bandwidth=1e-9).sigma - base)),
              np.max(np.abs(generalized_spatial_hac(psi, g.positions, bandwidth=1e-9,
                                                    theta_bandwidth=0.5).sigma - base)))
    lattice = 0.0
    for spacing in (0.3, 1.0, 2.5):
        lg = path_graph(80, spacing)
        p = rng.normal(size=(80, 2))
        for h in (1.0, 2.0, 4.5):
            a = network_hac(p, lg, bandwidth=h).sigma
            b = spatial_hac(p, lg.positions, bandwidth=spacing * h).sigma
            lattice = max(lattice, np.max(np.abs(a - b)) / np.max(np.abs(b)))
    min_eig = np.inf
    for _ in range(50):
        B = rng.normal(size=(4, 4))
        min_eig = min(min_eig, np.linalg.eigvalsh(psd_floor((B + B.T) / 2, 0.1)).min())
    ok = dev <= 1e-15 and lattice <= 1e-13 and min_eig >= 0.1 - 1e-12
    detail = (f"h->0 max deviation {dev:.1e}; lattice max rel. deviation {lattice:.1e}; "
              f"floored min eigenvalue {min_eig:.6f} (c = 0.1)")
    assert record(6, ok, detail)


def test_criterion_7_bandwidth_grid_workflow(tmp_path):
    # weak dependence: i.i.d. errors and a small peer coefficient
    assert main(["simulate", "--n", "2000", "--seed", "7", "--errors", "iid", "--beta3", "0.2",
                 "--out", str(tmp_path)]) == 0
    out = tmp_path / "est.json"
    assert main(["estimate", "--nodes", str(tmp_path / "nodes.csv"), "--edges", str(tmp_path / "edges.csv"),
                 "--method", "spatial,network", "--bandwidth-grid", "0,1,2,3", "--out", str(out)]) == 0
    res = json.loads(out.read_text())
    iid = np.array(res["iid_se"])
    zero_dev, spread = 0.0, {}
    for m in ("spatial", "network"):
        rows = {r["h"]: np.array(r["se"]) for r in res["results"] if r["method"] == m}
        zero_dev = max(zero_dev, np.max(np.abs(rows[0.0] - iid) / iid))
        se = np.array([rows[h] for h in (1.0, 2.0, 3.0)])
        spread[m] = float(np.max((se.max(0) - se.min(0)) / se.min(0)))
    ok = zero_dev <= 1e-12 and all(v < 0.2 for v in spread.values())
    detail = (f"h=0 vs iid max rel. deviation {zero_dev:.1e}; SE variation over h=1..3: "
              + ", ".join(f"{m} {100 * v:.1f}%" for m, v in spread.items()) + " (need < 20%)")
    assert record(7, ok, detail)
