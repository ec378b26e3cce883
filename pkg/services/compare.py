"""
Baseline comparison: the CNF and the realNVP stack trained on the same
couplings, with ESS and MH acceptance tracked against wall-clock.

OUTPUTS (under output_dir):
- cnf/, realnvp/     normal training run directories
- compare.csv        model, epoch, elapsed_seconds, ess, acceptance
- compare.json       last row per model

RULES:
- Arms train one after the other so their wall-clocks are comparable
- Acceptance comes from a short flow-proposal chain per saved checkpoint,
  all chains drawn from the same seed
- elapsed_seconds is training wall-clock only (chains are not counted)
"""

import logging
import os

import pandas as pd

import config
from ml.inference.model_loader import load_checkpoint
from ml.inference.sampler import flow_chain
from ml.training.metrics_log import read_metrics, records_to_frame
from ml.training.train_flow import CHECKPOINT_DIR, LAST_CHECKPOINT, METRICS_FILE, train
from physics.phi4 import Phi4Couplings
from services.artifacts import ensure_dir, write_json, write_manifest, write_table
from utils.rng import streams

logger = logging.getLogger(__name__)

COMPARE_COLUMNS = ["model", "epoch", "elapsed_seconds", "ess", "acceptance"]
CURVES_FILE = "compare.csv"
REPORT_FILE = "compare.json"


def arm_configs(cfg: config.RunConfig, budget_epochs: int | None = None):
    base = cfg
    if budget_epochs is not None:
        base = base.replace("train", epochs=budget_epochs)
    return [
        base.replace("run", model=kind, output_dir=os.path.join(cfg.run.output_dir, kind))
        for kind in config.MODEL_KINDS
    ]


def saved_checkpoints(run_dir) -> dict[int, str]:
    """Completed-epoch count -> checkpoint path, one per epoch."""
    folder = os.path.join(run_dir, CHECKPOINT_DIR)
    names = sorted(n for n in os.listdir(folder) if n.startswith("epoch_") and n.endswith(".lflow"))
    found = {int(n[len("epoch_"):-len(".lflow")]): os.path.join(folder, n) for n in names}

    last = os.path.join(folder, LAST_CHECKPOINT)
    if os.path.exists(last):
        _, _, meta = load_checkpoint(last)
        found.setdefault(int(meta["progress"]["epoch"]), last)
    return dict(sorted(found.items()))


def acceptance_curve(arm: config.RunConfig, chain_steps: int) -> pd.DataFrame:
    couplings = Phi4Couplings(arm.couplings.m_sq, arm.couplings.lam)
    rows = []
    for completed, path in saved_checkpoints(arm.run.output_dir).items():
        model, _, _ = load_checkpoint(path)
        record = flow_chain(model, couplings, chain_steps, streams(arm.run.seed + 1), arm.sampler.chunk_size)
        rows.append({"epoch": completed - 1, "acceptance": record.acceptance_rate})
        logger.info("%s after %d epochs: acceptance %.3f", arm.run.model, completed, record.acceptance_rate)
    return pd.DataFrame(rows, columns=["epoch", "acceptance"])


def join_curves(metrics: pd.DataFrame, acceptance: pd.DataFrame, model: str) -> pd.DataFrame:
    """Checkpointed epochs only, with their training wall-clock and ESS."""
    joined = metrics[["epoch", "elapsed_seconds", "ess"]].merge(acceptance, on="epoch", how="inner")
    joined.insert(0, "model", model)
    return joined[COMPARE_COLUMNS]


def cmd_compare(cfg: config.RunConfig, budget_epochs: int | None = None,
                chain_steps: int | None = None) -> dict:
    out_dir = ensure_dir(cfg.run.output_dir)
    chain_steps = chain_steps or cfg.sampler.chain_length
    write_manifest(out_dir, "compare", cfg, budget_epochs=budget_epochs, chain_steps=chain_steps)

    curves = []
    for arm in arm_configs(cfg, budget_epochs):
        run_dir = ensure_dir(arm.run.output_dir)
        config.dump_config(arm, os.path.join(run_dir, "config.toml"))
        train(arm, out_dir=run_dir)

        metrics = records_to_frame(read_metrics(os.path.join(run_dir, METRICS_FILE)))
        curves.append(join_curves(metrics, acceptance_curve(arm, chain_steps), arm.run.model))

    frame = pd.concat(curves, ignore_index=True).sort_values(["model", "elapsed_seconds"])
    write_table(os.path.join(out_dir, CURVES_FILE), frame)

    report = {}
    for model, rows in frame.groupby("model"):
        last = rows.iloc[-1]
        report[model] = {
            "epoch": int(last["epoch"]),
            "elapsed_seconds": float(last["elapsed_seconds"]),
            "ess": float(last["ess"]),
            "acceptance": float(last["acceptance"]),
        }
    write_json(os.path.join(out_dir, REPORT_FILE), report)
    for model, row in report.items():
        logger.info(
            "%s: ESS %.3f, acceptance %.3f after %.1fs",
            model, row["ess"], row["acceptance"], row["elapsed_seconds"],
        )
    return report
