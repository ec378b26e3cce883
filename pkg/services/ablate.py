"""
Equivariance ablation: every CNF variant × several seeds, one training run each.

OUTPUTS (under output_dir):
- <variant>/seed_<k>/      a normal training run directory
- ablation_runs.csv         variant, seed, epoch, loss, ess, elapsed_seconds
- ablation.csv              variant, epoch, ess_mean, ess_std, ess_rolling
- ablation.json             final ESS per arm + ordering gate
"""

import logging
import os

import pandas as pd
from joblib import Parallel, delayed

import config
from logic.gates import evaluate_ablation_order
from ml.training.metrics_log import read_metrics, records_to_frame
from ml.training.train_flow import METRICS_FILE, train
from services.artifacts import ensure_dir, write_json, write_manifest, write_table
from utils.formatters import rolling_average

logger = logging.getLogger(__name__)

ABLATION_SEEDS = (0, 1, 2)
RUNS_FILE = "ablation_runs.csv"
CURVES_FILE = "ablation.csv"
REPORT_FILE = "ablation.json"


def arm_configs(cfg: config.RunConfig, seeds=ABLATION_SEEDS, budget_epochs: int | None = None):
    base = cfg.replace("run", model="cnf", workers=1)
    if budget_epochs is not None:
        base = base.replace("train", epochs=budget_epochs)

    arms = []
    for variant in config.VARIANTS:
        for seed in seeds:
            out = os.path.join(cfg.run.output_dir, variant, f"seed_{seed}")
            arms.append(base.replace("run", variant=variant, seed=seed, output_dir=out))
    return arms


def _run_arm(arm: config.RunConfig) -> str:
    out_dir = ensure_dir(arm.run.output_dir)
    config.dump_config(arm, os.path.join(out_dir, "config.toml"))
    write_manifest(out_dir, "ablate-arm", arm)
    train(arm, out_dir=out_dir)
    return os.path.join(out_dir, METRICS_FILE)


def combine_runs(arms) -> pd.DataFrame:
    frames = []
    for arm in arms:
        records = read_metrics(os.path.join(arm.run.output_dir, METRICS_FILE))
        frame = records_to_frame(records)
        frame.insert(0, "seed", arm.run.seed)
        frame.insert(0, "variant", arm.run.variant)
        frames.append(frame)
    return pd.concat(frames, ignore_index=True)


def ess_curves(runs: pd.DataFrame, window: int) -> pd.DataFrame:
    curves = (
        runs.groupby(["variant", "epoch"])["ess"]
        .agg(ess_mean="mean", ess_std="std")
        .reset_index()
        .sort_values(["variant", "epoch"])
    )
    curves["ess_std"] = curves["ess_std"].fillna(0.0)
    curves["ess_rolling"] = (
        curves.groupby("variant")["ess_mean"]
        .transform(lambda s: rolling_average(s.to_numpy(), window).to_numpy())
    )
    return curves


def cmd_ablate(cfg: config.RunConfig, seeds=ABLATION_SEEDS, budget_epochs: int | None = None) -> dict:
    out_dir = ensure_dir(cfg.run.output_dir)
    write_manifest(out_dir, "ablate", cfg, seeds=list(seeds), budget_epochs=budget_epochs)

    arms = arm_configs(cfg, seeds, budget_epochs)
    logger.info("Ablation: %d runs on %d workers", len(arms), cfg.run.workers)
    Parallel(n_jobs=cfg.run.workers)(delayed(_run_arm)(arm) for arm in arms)

    runs = combine_runs(arms)
    curves = ess_curves(runs, cfg.train.rolling_window)
    write_table(os.path.join(out_dir, RUNS_FILE), runs[["variant", "seed", "epoch", "loss", "ess", "elapsed_seconds"]])
    write_table(os.path.join(out_dir, CURVES_FILE), curves)

    final = runs.sort_values("epoch").groupby(["variant", "seed"])["ess"].last()
    final_ess = {
        variant: {int(seed): float(v) for (var, seed), v in final.items() if var == variant}
        for variant in config.VARIANTS
    }
    gate = evaluate_ablation_order(final_ess)
    for reason in gate["reasons"]:
        logger.info("Ablation: %s", reason)

    write_json(os.path.join(out_dir, REPORT_FILE), {"final_ess": final_ess, "gate": gate})
    return gate
