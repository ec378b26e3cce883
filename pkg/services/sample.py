"""
Flow-proposal MH chain from a checkpoint.

OUTPUTS:
- samples.lflow   chain states + accept flags + per-step log q / log p̃
- chain.csv       step, accepted, log_q, log_p
- summary.json    acceptance rate, non-finite tally, chain length
"""

import logging
import os

import numpy as np
import pandas as pd

import config
from ml.inference.model_loader import load_checkpoint
from ml.inference.sampler import ChainRecord, flow_chain
from physics.phi4 import Phi4Couplings
from services.artifacts import ensure_dir, write_json, write_manifest, write_table
from utils.rng import streams
from utils.store import write_store

logger = logging.getLogger(__name__)

SAMPLES_FILE = "samples.lflow"
CHAIN_FILE = "chain.csv"
SUMMARY_FILE = "summary.json"


def chain_frame(record: ChainRecord) -> pd.DataFrame:
    return pd.DataFrame({
        "step": np.arange(len(record)),
        "accepted": record.accepted.astype(int),
        "log_q": record.log_q,
        "log_p": record.log_p,
    })


def cmd_sample(checkpoint, n_steps: int, seed: int, out_dir, chunk_size: int = 100,
               progress: bool = False) -> ChainRecord:
    model, _, meta = load_checkpoint(checkpoint)
    run_cfg = config.config_from_dict(meta["config"])
    couplings = Phi4Couplings(run_cfg.couplings.m_sq, run_cfg.couplings.lam)

    out_dir = ensure_dir(out_dir)
    write_manifest(
        out_dir, "sample", run_cfg,
        checkpoint=str(checkpoint), chain_seed=seed, n_steps=n_steps, chunk_size=chunk_size,
    )

    record = flow_chain(model, couplings, n_steps, streams(seed), chunk_size, progress)

    summary = {
        "acceptance_rate": record.acceptance_rate,
        "n_steps": n_steps,
        "non_finite": record.non_finite,
        "seed": seed,
        "checkpoint": str(checkpoint),
    }
    write_store(
        os.path.join(out_dir, SAMPLES_FILE),
        {
            "samples": record.samples,
            "accepted": record.accepted.astype(np.float64),
            "log_q": record.log_q,
            "log_p": record.log_p,
        },
        {
            **summary,
            "L": model.geo.L,
            "m_sq": couplings.m_sq,
            "lam": couplings.lam,
            "model": model.describe(),
        },
    )
    write_table(os.path.join(out_dir, CHAIN_FILE), chain_frame(record))
    write_json(os.path.join(out_dir, SUMMARY_FILE), summary)
    return record
