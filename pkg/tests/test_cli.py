"""End-to-end CLI tests driving the full gen -> cluster -> plan -> simulate
-> bounds -> evaluate pipeline in process."""

import csv
import json
from pathlib import Path

import numpy as np
import pytest

from coarsematch.cli import build_parser, main
from coarsematch.clustering import load_clustering
from coarsematch.instance import load_instance, save_instance
from coarsematch.lp import load_plan, plan_consistent_with

from helpers import make_instance


def read_csv_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_gen_config(tmp_path, **overrides):
    cfg = dict(
        n_patients=16,
        n_clusters_planted=2,
        feature_dim=4,
        n_donor_types=4,
        horizon=8,
        seed=0,
    )
    cfg.update(overrides)
    path = tmp_path / "gen.json"
    path.write_text(json.dumps(cfg))
    return path


class TestParser:
    def test_requires_subcommand(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args([])

    def test_policy_spec_parsing(self):
        args = build_parser().parse_args(
            ["simulate", "--instance", "i", "--plan", "p", "--policy", "csm:resample:greedy"]
        )
        assert args.policy == ["csm:resample:greedy"]


class TestGen:
    def test_writes_valid_instance(self, tmp_path, capsys):
        cfg = write_gen_config(tmp_path)
        out = tmp_path / "inst.json"
        rc = main(["gen", "--config", str(cfg), "--out", str(out)])
        assert rc == 0
        assert str(out) in capsys.readouterr().out

        inst = load_instance(out)
        assert inst.n_patients == 16
        assert inst.n_donor_types == 4

    def test_seed_override_changes_output(self, tmp_path):
        cfg = write_gen_config(tmp_path)
        a, b, c = (tmp_path / n for n in ("a.json", "b.json", "c.json"))
        assert main(["gen", "--config", str(cfg), "--out", str(a)]) == 0
        assert main(["gen", "--config", str(cfg), "--out", str(b), "--seed", "9"]) == 0
        assert main(["gen", "--config", str(cfg), "--out", str(c), "--seed", "9"]) == 0
        assert a.read_bytes() != b.read_bytes()
        assert b.read_bytes() == c.read_bytes()

    def test_truth_sidecar(self, tmp_path):
        cfg = write_gen_config(tmp_path, noise_delta=0.05)
        out = tmp_path / "inst.json"
        truth_path = tmp_path / "truth.json"
        assert main(["gen", "--config", str(cfg), "--out", str(out), "--truth", str(truth_path)]) == 0

        truth = json.loads(truth_path.read_text())
        members = sorted(u for c in truth["planted_clusters"] for u in c)
        assert members == list(range(16))
        assert truth["bad_clusters"] == []
        assert truth["true_weights"] is None

    def test_defaults_when_no_config(self, tmp_path):
        rc = main(["gen", "--out-dir", str(tmp_path)])
        assert rc == 0
        inst = load_instance(tmp_path / "instance.json")
        assert inst.n_patients == 64

    def test_bad_config_exits_nonzero(self, tmp_path, capsys):
        cfg = tmp_path / "bad.json"
        cfg.write_text(json.dumps({"n_patients": -4}))
        rc = main(["gen", "--config", str(cfg), "--out-dir", str(tmp_path)])
        assert rc == 2
        assert capsys.readouterr().err.startswith("gen:")


class TestPipeline:
    @pytest.fixture()
    def instance_path(self, tmp_path):
        cfg = write_gen_config(tmp_path)
        out = tmp_path / "inst.json"
        assert main(["gen", "--config", str(cfg), "--out", str(out)]) == 0
        return out

    def test_cluster_then_plan_then_simulate(self, tmp_path, instance_path):
        clust_path = tmp_path / "clust.json"
        rc = main(["cluster", "--instance", str(instance_path), "--b", "2", "--out", str(clust_path)])
        assert rc == 0
        clustering = load_clustering(clust_path)
        assert clustering.min_size == 2
        assert all(len(c) >= 2 for c in clustering.clusters)

        plan_path = tmp_path / "plan.json"
        rc = main(["plan", "--instance", str(instance_path), "--clustering", str(clust_path), "--out", str(plan_path)])
        assert rc == 0
        plan = load_plan(plan_path)
        inst = load_instance(instance_path)
        plan_consistent_with(plan, inst)  # raises on mismatch
        assert plan.clustering is not None
        assert plan.clustering.clusters == clustering.clusters

        run_dir = tmp_path / "runs"
        rc = main(
            [
                "simulate",
                "--instance", str(instance_path),
                "--plan", str(plan_path),
                "--policy", "csm:resample:greedy",
                "--policy", "sm_b",
                "--replications", "3",
                "--arrival-mode", "iid_rounds",
                "--out-dir", str(run_dir),
                "--seed", "5",
            ]
        )
        assert rc == 0
        runs = sorted(run_dir.glob("run_*.csv"))
        assert len(runs) == 6
        summary = read_csv_rows(run_dir / "summary.csv")
        labels = {"csm-resample-greedy", "sm_b-discard-uniform_random"}
        assert {row["policy"] for row in summary} == labels
        for row in summary:
            assert 0.0 <= float(row["mean_ratio"]) <= 1.0 + 1e-9

        # rescoring the raw run files reproduces the summary
        rescored_path = tmp_path / "rescored.csv"
        assert main(["evaluate", "--runs", str(run_dir), "--out", str(rescored_path)]) == 0
        rescored = {row["policy"]: row for row in read_csv_rows(rescored_path)}
        assert set(rescored) == labels
        for row in summary:
            assert float(rescored[row["policy"]]["mean_ratio"]) == pytest.approx(
                float(row["mean_ratio"]), abs=1e-12
            )

    def test_plan_without_clustering_is_patient_level(self, tmp_path, instance_path):
        plan_path = tmp_path / "flat.json"
        assert main(["plan", "--instance", str(instance_path), "--out", str(plan_path)]) == 0
        plan = load_plan(plan_path)
        assert plan.clustering is None
        inst = load_instance(instance_path)
        assert plan.flows.shape == (inst.n_patients, inst.n_donor_types)

    def test_evaluate_rescores_simulate_runs(self, tmp_path, instance_path):
        # evaluate --runs requires artifact.json, which scenario writes
        config = {
            "b_grid": [2],
            "policies": [{"kind": "sm_b"}, {"kind": "csm", "dispatch": "resample"}],
            "generator": {"n_patients": 16, "n_clusters_planted": 2, "feature_dim": 4,
                          "n_donor_types": 4, "horizon": 8, "seed": 0},
            "n_replications": 3,
            "arrival_mode": "iid_rounds",
        }
        cfg_path = tmp_path / "scenario.json"
        cfg_path.write_text(json.dumps(config))
        run_dir = tmp_path / "sweep"
        assert main(["scenario", "--config", str(cfg_path), "--out-dir", str(run_dir)]) == 0

        out = tmp_path / "rescored.csv"
        rc = main(["evaluate", "--runs", str(run_dir), "--out", str(out)])
        assert rc == 0
        rescored = {row["policy"]: row for row in read_csv_rows(out)}
        original = {row["policy"]: row for row in read_csv_rows(run_dir / "summary.csv")}
        assert set(rescored) == set(original)
        for label, row in rescored.items():
            assert float(row["mean_ratio"]) == pytest.approx(
                float(original[label]["mean_ratio"]), abs=1e-12
            )


class TestBounds:
    def test_grid_mode_csv(self, tmp_path):
        out = tmp_path / "bounds.csv"
        rc = main(["bounds", "--b-grid", "16,64", "--delta", "0.05", "--eta", "0.1", "--out", str(out)])
        assert rc == 0
        rows = read_csv_rows(out)
        assert [int(r["b"]) for r in rows] == [16, 64]
        for row in rows:
            assert 0.0 <= float(row["bound_full"]) <= float(row["alpha"])

    def test_grid_mode_json(self, tmp_path):
        out = tmp_path / "bounds.json"
        rc = main(["bounds", "--b-grid", "25", "--format", "json", "--out", str(out)])
        assert rc == 0
        rows = json.loads(out.read_text())
        assert rows[0]["b"] == 25
        assert rows[0]["delta"] == 0.0

    def test_measured_mode(self, tmp_path):
        cfg = write_gen_config(tmp_path, noise_delta=0.05)
        inst_path = tmp_path / "inst.json"
        clust_path = tmp_path / "clust.json"
        out = tmp_path / "measured.csv"
        assert main(["gen", "--config", str(cfg), "--out", str(inst_path)]) == 0
        assert main(["cluster", "--instance", str(inst_path), "--b", "4", "--out", str(clust_path)]) == 0
        rc = main(
            ["bounds", "--instance", str(inst_path), "--clustering", str(clust_path), "--out", str(out)]
        )
        assert rc == 0
        row = read_csv_rows(out)[0]
        assert int(row["b"]) == 4
        assert float(row["delta"]) >= 0.0
        assert row["nmae_max"] != ""

    def test_missing_arguments_exit_nonzero(self, tmp_path, capsys):
        rc = main(["bounds", "--out-dir", str(tmp_path)])
        assert rc == 2
        assert capsys.readouterr().err.startswith("bounds:")


class TestEvaluateDrift:
    def test_psi_by_blood_group(self, tmp_path):
        base = make_instance(n_patients=20, n_donor_types=4, horizon=8, seed=1)
        actual = make_instance(n_patients=20, n_donor_types=4, horizon=8, seed=2)
        base_path, actual_path = tmp_path / "base.json", tmp_path / "actual.json"
        save_instance(base, base_path)
        save_instance(actual, actual_path)

        out = tmp_path / "psi.csv"
        rc = main(
            [
                "evaluate",
                "--baseline-instance", str(base_path),
                "--actual-instance", str(actual_path),
                "--out", str(out),
            ]
        )
        assert rc == 0
        rows = read_csv_rows(out)
        groups = [row["group"] for row in rows]
        assert "all" in groups
        for row in rows:
            assert float(row["psi"]) >= 0.0
            assert row["classification"] in ("stable", "minor", "major")

    def test_identical_population_is_stable(self, tmp_path):
        inst = make_instance(n_patients=20, n_donor_types=4, horizon=8, seed=1)
        path = tmp_path / "same.json"
        save_instance(inst, path)
        out = tmp_path / "psi.csv"
        rc = main(
            ["evaluate", "--baseline-instance", str(path), "--actual-instance", str(path), "--out", str(out)]
        )
        assert rc == 0
        for row in read_csv_rows(out):
            assert float(row["psi"]) == pytest.approx(0.0, abs=1e-9)
            assert row["classification"] == "stable"

    def test_needs_a_mode(self, tmp_path, capsys):
        rc = main(["evaluate", "--out-dir", str(tmp_path)])
        assert rc == 2
        assert capsys.readouterr().err.startswith("evaluate:")


class TestScenarioCommand:
    def test_seed_and_out_dir_overrides(self, tmp_path):
        config = {
            "b_grid": [1],
            "policies": [{"kind": "greedy"}],
            "generator": {"n_patients": 12, "n_clusters_planted": 2, "feature_dim": 4,
                          "n_donor_types": 3, "horizon": 6, "seed": 0},
            "n_replications": 2,
            "arrival_mode": "iid_rounds",
            "master_seed": 0,
            "out_dir": str(tmp_path / "ignored"),
        }
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(config))
        run_dir = tmp_path / "actual"
        rc = main(["scenario", "--config", str(cfg_path), "--out-dir", str(run_dir), "--seed", "3"])
        assert rc == 0
        assert (run_dir / "summary.csv").exists()
        assert not (tmp_path / "ignored").exists()

    def test_malformed_config_exits_nonzero(self, tmp_path, capsys):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({"policies": []}))
        rc = main(["scenario", "--config", str(cfg_path), "--out-dir", str(tmp_path)])
        assert rc == 2
        assert capsys.readouterr().err.startswith("scenario:")
