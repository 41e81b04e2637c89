import json
import math
import os

import numpy as np
import pytest

from nethac.mc import (
    ALL_METHODS,
    FULL_ORACLE_REPS,
    FULL_REPS,
    Checkpoint,
    McConfig,
    McReport,
    draw_sample,
    NS_PROBIT,
    run_probit_study,
    run_replications,
    run_score_variance_study,
    run_weighted_outcome_study,
    summarize,
    with_overrides,
)

GOLDEN = os.path.join(os.path.dirname(__file__), "golden", "probit_n200_r50_seed11.csv")


def small(**kw):
    base = dict(n_list=(150,), reps=12, oracle_reps=12, master_seed=3, chunk_size=5)
    base.update(kw)
    return McConfig(**base)


def test_config_validation():
    with pytest.raises(ValueError):
        McConfig(n_list=())
    with pytest.raises(ValueError):
        McConfig(reps=0)
    with pytest.raises(ValueError):
        McConfig(methods=("spatial", "bootstrap"))
    with pytest.raises(ValueError):
        McConfig(moment_center="median")
    with pytest.raises(ValueError):
        McConfig(level=1.5)


def test_defaults_and_full_scale():
    cfg = McConfig()
    assert cfg.kappa == pytest.approx(5 / math.pi)
    assert cfg.beta_true == (0.5, -0.3, 1.0)
    assert cfg.methods == ALL_METHODS
    full = McConfig.full_scale()
    assert (full.reps, full.oracle_reps) == (FULL_REPS, FULL_ORACLE_REPS) == (15000, 7500)


def test_bandwidth_defaults_and_overrides():
    cfg = McConfig()
    assert cfg.bandwidth("spatial", 1000) == pytest.approx(1000 ** (1 / 6))
    assert cfg.bandwidth("network", 1000) == pytest.approx(math.log(1000))
    cfg = McConfig(bandwidths={"network": 2.0})
    assert cfg.bandwidth("network", 1000) == 2.0
    assert cfg.hac_config("naive", 1000).method == "iid"


def test_fingerprint_ignores_execution_controls():
    a = McConfig(workers=1, chunk_size=10)
    assert a.fingerprint() == McConfig(workers=4, chunk_size=99).fingerprint()
    assert a.fingerprint() != McConfig(master_seed=1).fingerprint()


def test_draw_sample_is_deterministic():
    cfg = small()
    g1, p1, f1, _ = draw_sample(cfg, 150, NS_PROBIT, 4)
    g2, p2, f2, _ = draw_sample(cfg, 150, NS_PROBIT, 4)
    np.testing.assert_array_equal(g1.positions, g2.positions)
    np.testing.assert_array_equal(p1.outcomes, p2.outcomes)
    np.testing.assert_array_equal(f1.beta_hat, f2.beta_hat)
    g3 = draw_sample(cfg, 150, NS_PROBIT, 5)[0]
    assert not np.array_equal(g1.positions, g3.positions)


def test_study_deterministic_and_worker_invariant():
    a = run_probit_study(small())
    b = run_probit_study(small())
    c = run_probit_study(small(workers=2))
    assert summarize(a, "json") == summarize(b, "json") == summarize(c, "json")


def test_checkpoint_resume_matches_uninterrupted(tmp_path):
    cfg = small()
    path = str(tmp_path / "ck.jsonl")
    full = run_probit_study(cfg)
    # interrupted run: half the replications, then a torn final line
    ck = Checkpoint(path, f"probit:{cfg.fingerprint()}")
    run_replications(cfg, "probit", 150, 6, ck)
    with open(path, "a") as fh:
        fh.write('{"key": ["probit", 150, 6], "rec')
    resumed = run_probit_study(cfg, checkpoint=path)
    assert summarize(resumed, "json") == summarize(full, "json")
    with open(path) as fh:
        lines = fh.read().splitlines()
    assert len(lines) == 1 + cfg.reps + cfg.oracle_reps
    # resuming a finished run recomputes nothing and gives the same answer
    assert summarize(run_probit_study(cfg, checkpoint=path), "json") == summarize(full, "json")


def test_checkpoint_rejects_other_configuration(tmp_path):
    path = str(tmp_path / "ck.jsonl")
    run_probit_study(small(reps=5, oracle_reps=5), checkpoint=path)
    with pytest.raises(ValueError, match="different configuration"):
        run_probit_study(small(reps=5, oracle_reps=5, master_seed=99), checkpoint=path)


def test_probit_report_shape():
    rep = run_probit_study(small(n_list=(150, 200), reps=6, oracle_reps=6))
    assert len(rep.rows) == 2 * len(ALL_METHODS) * 3
    assert rep.counts["150"]["reps"] == 6
    for r in rep.rows:
        assert r["mean_se"] > 0 and 0 <= r["reject_pct"] <= 100
    oracle = rep.row(150, "oracle", "beta1")
    assert oracle["mean_se"] == oracle["oracle_se"]


def test_summarize_errors():
    rep = McReport("probit", [], {}, 0)
    with pytest.raises(ValueError):
        summarize(rep, "table")
    rep = McReport("probit", [{"n": 500, "method": "spatial", "coordinate": "beta1", "mean_se": 0.1,
                               "reject_pct": 5.0, "oracle_se": 0.1, "true_value": 0.5,
                               "mean_estimate": 0.5}], {}, 0)
    with pytest.raises(ValueError):
        summarize(rep, "xml")


def test_summarize_single_cell():
    rep = McReport("probit", [{"n": 500, "method": "spatial", "coordinate": "beta1", "mean_se": 0.1234,
                               "reject_pct": 5.0, "oracle_se": 0.1, "true_value": 0.5,
                               "mean_estimate": 0.5}], {}, 0)
    csv_lines = summarize(rep, "csv").splitlines()
    assert len(csv_lines) == 2
    table = summarize(rep, "table")
    assert "Spatial HAC" in table and "0.123" in table and "5.00" in table
    assert json.loads(summarize(rep, "json"))["rows"][0]["mean_se"] == 0.1234


def test_table_headers_align():
    rep = run_weighted_outcome_study(small(n_list=(150, 200), reps=4, oracle_reps=4))
    block = summarize(rep, "table").split("\n\n")[0].splitlines()
    assert len({len(line) for line in block[1:]}) == 1


def test_with_overrides_skips_none():
    cfg = with_overrides(McConfig(), reps=7, workers=None)
    assert cfg.reps == 7 and cfg.workers == 1


def test_golden_probit_csv():
    cfg = McConfig(n_list=(200,), reps=50, oracle_reps=50, master_seed=11)
    text = summarize(run_probit_study(cfg), "csv")
    with open(GOLDEN) as fh:
        assert text == fh.read()


def test_oracle_rejection_within_binomial_band():
    # the oracle SE is the Monte Carlo spread itself, so its size is nominal
    reps = 400
    rep = run_weighted_outcome_study(McConfig(n_list=(200,), reps=reps, oracle_reps=reps, master_seed=5,
                                              methods=("oracle",)))
    p = rep.row(200, "oracle", "mean")["reject_pct"] / 100
    band = 3 * math.sqrt(0.05 * 0.95 / reps)
    assert abs(p - 0.05) < band


def test_score_variance_study_keys():
    out = run_score_variance_study(small(reps=5, methods=("spatial", "network")), 150)
    assert set(out["methods"]) == {"spatial", "network"}
    assert np.asarray(out["oracle"]).shape == (3, 3)
