"""
Equivariance audit command: log q and log p̃ of every group image of a few
model samples, written as plot-ready CSV plus per-sample orbit statistics
(mean, std and max − min of log q and log p̃).
"""

import logging
import os

import config
from logic.gates import EQUIVARIANCE_TOLERANCE, evaluate_equivariance_audit
from ml.features.schema import uses_orbits
from ml.inference.equivariance import audit_frame, spread_summary
from ml.inference.model_loader import load_checkpoint
from ml.models.base import FlowModel
from physics.phi4 import Phi4Couplings
from services.artifacts import ensure_dir, write_json, write_manifest, write_table
from utils.rng import AUDIT_STREAM, Stream

logger = logging.getLogger(__name__)

AUDIT_FILE = "audit.csv"
SPREAD_FILE = "audit_spread.csv"
REPORT_FILE = "audit.json"


def expects_invariance(model: FlowModel) -> bool:
    return model.kind == "cnf" and uses_orbits(model.variant)


def cmd_check_equivariance(checkpoint, n_samples: int, seed: int, out_dir,
                           tolerance: float = EQUIVARIANCE_TOLERANCE) -> dict:
    model, _, meta = load_checkpoint(checkpoint)
    run_cfg = config.config_from_dict(meta["config"])
    couplings = Phi4Couplings(run_cfg.couplings.m_sq, run_cfg.couplings.lam)

    out_dir = ensure_dir(out_dir)
    write_manifest(out_dir, "check-equivariance", run_cfg,
                   checkpoint=str(checkpoint), audit_seed=seed, n_samples=n_samples)

    frame = audit_frame(model, couplings, n_samples, Stream(seed, AUDIT_STREAM))
    spreads = spread_summary(frame)
    write_table(os.path.join(out_dir, AUDIT_FILE), frame)
    write_table(os.path.join(out_dir, SPREAD_FILE), spreads)

    max_spread = float(spreads["log_q_spread"].max())
    gate = evaluate_equivariance_audit(max_spread, expects_invariance(model), tolerance)
    write_json(os.path.join(out_dir, REPORT_FILE), {
        "model": model.describe(),
        "group_size": int(frame["group_id"].nunique()),
        "n_samples": n_samples,
        "max_log_q_spread": max_spread,
        "max_log_q_std": float(spreads["log_q_std"].max()),
        "max_log_p_spread": float(spreads["log_p_spread"].max()),
        "per_sample": spreads.to_dict(orient="records"),
        "gate": gate,
    })

    logger.info("Audit over %d group elements: max log q spread %.3e",
                frame["group_id"].nunique(), max_spread)
    return gate
