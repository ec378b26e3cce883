"""Budgeted runs at L = 6. Minutes to hours; enable with --runslow."""

import os

import pytest

import config
import ml.training.train_flow as train_flow
from ml.inference.equivariance import audit_frame, spread_summary
from ml.inference.model_loader import build_model
from ml.inference.sampler import flow_chain
from physics.observables import measure, thin
from physics.phi4 import Phi4Couplings, action
from services.ablate import cmd_ablate
from services.free_check import cmd_free_check
from utils.rng import AUDIT_STREAM, Stream, streams

CONFIG_DIR = os.path.join(os.path.dirname(__file__), "..", "configs")

pytestmark = pytest.mark.slow


def load(name, tmp_path):
    cfg = config.load_config(os.path.join(CONFIG_DIR, name))
    return cfg.replace("run", output_dir=str(tmp_path / "run"))


def test_free_theory_passes(tmp_path):
    gate = cmd_free_check(load("free_l6.toml", tmp_path), 6, 1.0)
    assert gate["allowed"], gate["reasons"]
    assert gate["snapshot"]["acceptance"] >= 0.9


def test_free_theory_fails_with_flipped_action(tmp_path, monkeypatch):
    monkeypatch.setattr(train_flow, "log_unnormalized_density", lambda phi, c: action(phi, c))
    cfg = load("free_l6.toml", tmp_path).replace("train", epochs=20)
    gate = cmd_free_check(cfg, 6, 1.0)
    assert not gate["allowed"]


def test_fresh_full_model_audit(tmp_path):
    cfg = load("l6.toml", tmp_path)
    model = build_model(cfg)
    couplings = Phi4Couplings(cfg.couplings.m_sq, cfg.couplings.lam)
    frame = audit_frame(model, couplings, 6, Stream(0, AUDIT_STREAM))
    assert frame["group_id"].nunique() == 288
    assert spread_summary(frame)["log_q_spread"].max() <= 1e-6


def test_desk_scale_phi4(tmp_path):
    cfg = load("l6.toml", tmp_path)
    result = train_flow.train(cfg, out_dir=cfg.run.output_dir)
    assert result.metrics.best_ess >= 0.5

    couplings = Phi4Couplings(cfg.couplings.m_sq, cfg.couplings.lam)
    record = flow_chain(result.model, couplings, 10_000, streams(cfg.run.seed + 1), 100)
    assert record.acceptance_rate >= 0.5

    report = measure(thin(record.samples))
    assert 3.0 <= report["m_p_L"] <= 5.0


def test_ablation_full_beats_neither(tmp_path):
    cfg = load("l6.toml", tmp_path).replace("train", max_seconds=3600.0)
    gate = cmd_ablate(cfg.replace("run", workers=os.cpu_count() or 1))
    assert gate["allowed"], gate["reasons"]
