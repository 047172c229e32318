import csv
import io

import numpy as np
import pytest

from substadj.config import ExperimentConfig
from substadj.experiments import (
    bounds_violations,
    monte_carlo_mislabeling,
    run_bounds,
    run_kakutani,
    run_mislabeling,
    run_mse,
)
from substadj.simulate import SimSeed, draw_mixture_spec


def tiny_config(**overrides):
    base = dict(
        K=3,
        p_max=60,
        n_max=150,
        mu_scales=[1.5],
        gamma_scales=[0.0, 20.0],
        p_grid=[40],
        mse_p_grid=[40],
        n_grid=[150],
        replications=1,
        base_seed=99,
        mc_draws=2000,
    )
    base.update(overrides)
    return ExperimentConfig(**base)


def parse(text):
    lines = text.splitlines()
    assert lines[0].startswith("# substadj=")
    return list(csv.DictReader(io.StringIO("\n".join(lines[1:]))))


class TestRunMislabeling:
    def test_single_cell_row_counts(self):
        rows = parse(run_mislabeling(tiny_config()))
        data_rows = [r for r in rows if r["replication"] != "mean"]
        agg_rows = [r for r in rows if r["replication"] == "mean"]
        assert len(data_rows) == 1
        assert len(agg_rows) == 1
        assert data_rows[0]["error"] == ""
        assert 0.0 <= float(data_rows[0]["delta"]) <= 1.0

    def test_reruns_are_byte_identical(self):
        cfg = tiny_config(replications=2)
        assert run_mislabeling(cfg) == run_mislabeling(cfg)

    def test_worker_count_does_not_change_bytes(self, monkeypatch):
        cfg = tiny_config(replications=2, mu_scales=[1.0, 1.5])
        monkeypatch.setenv("SUBSTADJ_THREADS", "1")
        serial = run_mislabeling(cfg)
        monkeypatch.setenv("SUBSTADJ_THREADS", "2")
        parallel = run_mislabeling(cfg)
        assert serial == parallel

    def test_aggregate_is_mean_of_replications(self):
        cfg = tiny_config(replications=3)
        rows = parse(run_mislabeling(cfg))
        deltas = [float(r["delta"]) for r in rows if r["replication"] != "mean"]
        agg = [float(r["delta"]) for r in rows if r["replication"] == "mean"]
        assert agg[0] == pytest.approx(np.mean(deltas), abs=1e-15)

    def test_split_mode_runs(self):
        rows = parse(run_mislabeling(tiny_config(split_mode=True)))
        assert rows[0]["error"] == ""

    def test_failed_replication_is_recorded_not_fatal(self):
        # n = 4 < K = 5 makes recovery impossible; the row records the error
        cfg = tiny_config(K=5, n_max=8, n_grid=[4], p_grid=[40])
        rows = parse(run_mislabeling(cfg))
        data_rows = [r for r in rows if r["replication"] != "mean"]
        assert data_rows[0]["error"] == "RankDeficient"
        assert data_rows[0]["delta"] == ""


class TestRunMse:
    def test_schema_has_four_methods_per_cell(self):
        cfg = tiny_config(gamma_scales=[20.0])
        rows = parse(run_mse(cfg))
        data_rows = [r for r in rows if r["replication"] != "mean"]
        assert sorted(r["method"] for r in data_rows) == sorted(
            ["sub_adjust", "oracle", "ridge", "aug_ridge"]
        )
        for r in data_rows:
            assert r["error"] == ""
            assert float(r["mse"]) >= 0.0

    def test_reruns_are_byte_identical(self):
        cfg = tiny_config(gamma_scales=[0.0])
        assert run_mse(cfg) == run_mse(cfg)


class TestRunBounds:
    def test_inequalities_hold_and_mc_rows_present(self):
        cfg = tiny_config(replications=2, bound_coords=[1, 2])
        text = run_bounds(cfg)
        rows = parse(text)
        instance = [r for r in rows if r["record"] == "instance"]
        mc = [r for r in rows if r["record"] == "mislabeling_mc"]
        assert len(instance) == 4  # 2 replications x 2 coordinates
        assert len(mc) == len(cfg.p_grid)
        for r in instance:
            assert r["error"] == ""
            assert r["holds_thm1"] == "true"
            assert r["holds_lemma"] == "true"
        for r in mc:
            assert r["holds_chebyshev"] == "true"
            assert r["holds_subgaussian"] == "true"
        assert bounds_violations(text) == 0

    def test_advisory_flag_tracks_split_mode(self):
        shared = parse(run_bounds(tiny_config()))
        assert all(
            r["advisory"] == "true"
            for r in shared if r["record"] == "instance"
        )
        split = parse(run_bounds(tiny_config(split_mode=True)))
        assert all(
            r["advisory"] == "false"
            for r in split if r["record"] == "instance"
        )

    def test_violation_counter_reads_flags(self):
        text = "\n".join([
            "# substadj=x config=y",
            "record,holds_thm1,holds_lemma",
            "instance,false,true",
            "instance,true,true",
        ])
        assert bounds_violations(text) == 1


class TestMonteCarloMislabeling:
    def test_prefix_sharing_and_rates(self):
        spec = draw_mixture_spec(3, 100, 1.0, SimSeed(5))
        out = monte_carlo_mislabeling(spec, [20, 100], 4000, SimSeed(6))
        assert set(out) == {20, 100}
        for rate, se in out.values():
            assert 0.0 <= rate <= 1.0
            assert se >= 0.0
        # more coordinates separate better
        assert out[100][0] <= out[20][0] + 0.02


class TestRunKakutani:
    def test_curves_are_monotone_and_labeled(self):
        cfg = tiny_config()
        rows = parse(run_kakutani(cfg, pairs=[(1, 2)]))
        assert len(rows) == cfg.p_max
        means = [float(r["mean_partial"]) for r in rows]
        assert means == sorted(means)
        products = [float(r["bc_product"]) for r in rows]
        assert all(0.0 < b <= 1.0 for b in products)
        assert products == sorted(products, reverse=True)
        assert {r["verdict"] for r in rows} <= {
            "Recoverable", "NotRecoverable", "Inconclusive"
        }

    def test_default_covers_all_pairs(self):
        cfg = tiny_config(p_max=30, p_grid=[20], mse_p_grid=[20])
        rows = parse(run_kakutani(cfg))
        pairs = {(r["z"], r["v"]) for r in rows}
        assert len(pairs) == 3  # K=3 -> 3 unordered pairs
