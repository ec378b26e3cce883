import json

import numpy as np
import pandas as pd
import pytest

import app
import config
from ml.inference.equivariance import STAT_COLUMNS
from utils.store import read_store, write_store


@pytest.fixture
def config_file(tiny_config, tmp_path):
    return str(config.dump_config(tiny_config.replace("lattice", L=4), tmp_path / "tiny.toml"))


@pytest.fixture
def trained(config_file, tmp_path):
    out = tmp_path / "run"
    assert app.main(["--log-level", "WARNING", "train", "--config", config_file, "--out", str(out)]) == 0
    return out


def test_train_writes_run_directory(trained):
    assert (trained / "config.toml").exists()
    assert (trained / "manifest.json").exists()
    assert (trained / "metrics.csv").exists()
    assert (trained / "checkpoints" / "best.lflow").exists()
    manifest = json.loads((trained / "manifest.json").read_text())
    assert manifest["command"] == "train"


def test_flags_beat_env_beat_file(config_file, monkeypatch):
    monkeypatch.setenv(config.SEED_ENV_VAR, "11")
    args = app.build_parser().parse_args(["train", "--config", config_file])
    assert app.build_config(args).run.seed == 11
    args = app.build_parser().parse_args(["train", "--config", config_file, "--seed", "5", "--L", "6"])
    cfg = app.build_config(args)
    assert (cfg.run.seed, cfg.lattice.L) == (5, 6)


def test_sample_then_measure(trained, tmp_path, capsys):
    checkpoint = str(trained / "checkpoints" / "best.lflow")
    chain_dir = tmp_path / "chain"
    code = app.main([
        "sample", "--checkpoint", checkpoint, "--steps", "30", "--chunk-size", "10",
        "--seed", "3", "--out", str(chain_dir),
    ])
    assert code == 0
    assert "acceptance" in capsys.readouterr().out

    arrays, meta = read_store(chain_dir / "samples.lflow")
    assert arrays["samples"].shape == (30, 4, 4)
    assert arrays["accepted"][0] == 1.0
    assert meta["L"] == 4 and meta["lam"] == 0.0

    assert app.main(["measure", str(chain_dir / "samples.lflow"), "--blocks", "10"]) == 0
    report = json.loads((chain_dir / "measurement.json").read_text())
    assert report["n_samples"] == 30
    assert report["chi2_exact"] == 0.5


def test_check_equivariance_passes_for_full_model(trained, tmp_path):
    checkpoint = str(trained / "checkpoints" / "best.lflow")
    audit_dir = tmp_path / "audit"
    assert app.main(["check-equivariance", "--checkpoint", checkpoint, "--samples", "2",
                     "--out", str(audit_dir)]) == 0
    report = json.loads((audit_dir / "audit.json").read_text())
    assert report["group_size"] == 8 * 4 * 4
    assert report["gate"]["allowed"] is True
    assert len(report["per_sample"]) == 2
    assert all(row["log_q_std"] <= row["log_q_spread"] + 1e-12 for row in report["per_sample"])
    spreads = pd.read_csv(audit_dir / "audit_spread.csv")
    assert list(spreads.columns) == STAT_COLUMNS


def test_compare_writes_joined_curves(config_file, tmp_path, capsys):
    out = tmp_path / "compare"
    assert app.main(["compare", "--config", config_file, "--L", "2", "--out", str(out),
                     "--budget-epochs", "2", "--chain-steps", "10"]) == 0
    curves = pd.read_csv(out / "compare.csv")
    assert set(curves["model"]) == set(config.MODEL_KINDS)
    assert "acceptance" in capsys.readouterr().out


def test_bad_config_exit_code(tmp_path):
    path = tmp_path / "bad.toml"
    path.write_text("[lattice]\nL = 6\nsize = 2\n")
    assert app.main(["train", "--config", str(path)]) == config.EXIT_CONFIG_ERROR


def test_corrupt_checkpoint_is_a_config_error(tmp_path):
    path = tmp_path / "junk.lflow"
    path.write_bytes(b"junk")
    assert app.main(["sample", "--checkpoint", str(path), "--out", str(tmp_path / "c")]) == 2


def test_single_sample_store_is_a_numeric_failure(tmp_path):
    path = write_store(tmp_path / "one.lflow", {"samples": np.zeros((1, 4, 4))})
    assert app.main(["measure", str(path)]) == config.EXIT_NUMERIC_FAILURE
