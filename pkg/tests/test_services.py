import json

import numpy as np
import pandas as pd

import config
from services.ablate import arm_configs, cmd_ablate, ess_curves
from services.artifacts import now_utc, read_json, write_json, write_manifest
from services.compare import (
    COMPARE_COLUMNS,
    cmd_compare,
    join_curves,
    saved_checkpoints,
)
from services.compare import arm_configs as compare_arms
from services.free_check import cmd_free_check, free_check_config


class TestArtifacts:
    def test_manifest(self, tmp_path, tiny_config):
        path = write_manifest(tmp_path, "train", tiny_config, resume=None)
        manifest = read_json(path)
        assert manifest["command"] == "train"
        assert manifest["config"]["lattice"]["L"] == 2
        assert manifest["created_at"].endswith("+00:00")

    def test_numpy_values_serialize(self, tmp_path):
        path = write_json(tmp_path / "x" / "a.json", {"v": np.float64(0.5), "a": np.arange(3)})
        assert json.loads(open(path).read()) == {"a": [0, 1, 2], "v": 0.5}

    def test_now_is_utc(self):
        assert now_utc().utcoffset().total_seconds() == 0


class TestAblation:
    def test_arms(self, tiny_config):
        arms = arm_configs(tiny_config.replace("run", model="realnvp"), seeds=(0, 1), budget_epochs=7)
        assert len(arms) == 8
        assert {a.run.variant for a in arms} == set(config.VARIANTS)
        assert all(a.run.model == "cnf" and a.train.epochs == 7 and a.run.workers == 1 for a in arms)
        assert len({a.run.output_dir for a in arms}) == 8

    def test_curves(self):
        runs = pd.DataFrame({
            "variant": ["a", "a", "a", "a"],
            "seed": [0, 0, 1, 1],
            "epoch": [0, 1, 0, 1],
            "ess": [0.2, 0.4, 0.4, 0.6],
        })
        curves = ess_curves(runs, window=2)
        assert np.allclose(curves["ess_mean"], [0.3, 0.5])
        assert np.allclose(curves["ess_rolling"], [0.3, 0.4])
        assert (curves["ess_std"] > 0).all()

    def test_tiny_ablation(self, tiny_config):
        gate = cmd_ablate(tiny_config, seeds=(0,), budget_epochs=1)
        assert set(gate) == {"allowed", "block_reason", "reasons", "snapshot"}

        out = tiny_config.run.output_dir
        report = read_json(f"{out}/ablation.json")
        assert set(report["final_ess"]) == set(config.VARIANTS)
        runs = pd.read_csv(f"{out}/ablation_runs.csv")
        assert len(runs) == 4
        assert "elapsed_seconds" in runs.columns
        assert set(pd.read_csv(f"{out}/ablation.csv").columns) >= {"ess_mean", "ess_std", "ess_rolling"}


class TestCompare:
    def test_arms(self, tiny_config):
        arms = compare_arms(tiny_config, budget_epochs=5)
        assert [a.run.model for a in arms] == list(config.MODEL_KINDS)
        assert all(a.train.epochs == 5 for a in arms)
        assert arms[0].run.output_dir != arms[1].run.output_dir

    def test_join_keeps_checkpointed_epochs(self):
        metrics = pd.DataFrame({
            "epoch": [0, 1, 2],
            "loss": [3.0, 2.0, 1.0],
            "ess": [0.1, 0.2, 0.3],
            "lr": [1e-3] * 3,
            "seconds": [1.0, 1.0, 1.0],
            "elapsed_seconds": [1.0, 2.0, 3.0],
        })
        acceptance = pd.DataFrame({"epoch": [1, 2], "acceptance": [0.4, 0.5]})
        joined = join_curves(metrics, acceptance, "cnf")
        assert list(joined.columns) == COMPARE_COLUMNS
        assert joined["elapsed_seconds"].tolist() == [2.0, 3.0]
        assert joined["ess"].tolist() == [0.2, 0.3]
        assert (joined["model"] == "cnf").all()

    def test_tiny_compare(self, tiny_config):
        report = cmd_compare(tiny_config, budget_epochs=3, chain_steps=20)
        assert set(report) == set(config.MODEL_KINDS)

        out = tiny_config.run.output_dir
        assert sorted(saved_checkpoints(f"{out}/cnf")) == [2, 3]
        curves = pd.read_csv(f"{out}/compare.csv")
        assert list(curves.columns) == COMPARE_COLUMNS
        assert len(curves) == 4
        for _, rows in curves.groupby("model"):
            assert rows["epoch"].tolist() == [1, 2]
            assert rows["elapsed_seconds"].is_monotonic_increasing
        assert ((curves["acceptance"] >= 0) & (curves["acceptance"] <= 1)).all()
        assert read_json(f"{out}/compare.json")["realnvp"]["epoch"] == 2


class TestFreeCheck:
    def test_forces_free_couplings(self, tiny_config):
        cfg = free_check_config(tiny_config.replace("couplings", m_sq=-4.0, lam=6.975), 4, 2.0)
        assert (cfg.lattice.L, cfg.couplings.m_sq, cfg.couplings.lam) == (4, 2.0, 0.0)

    def test_smoke(self, tiny_config):
        gate = cmd_free_check(tiny_config, 2, 1.0)
        assert set(gate) == {"allowed", "block_reason", "reasons", "snapshot"}
        saved = read_json(f"{tiny_config.run.output_dir}/free_check.json")
        assert saved["allowed"] == gate["allowed"]
