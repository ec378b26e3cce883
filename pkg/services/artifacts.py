"""
Run-directory artifacts: manifests, JSON reports, CSV tables.

Every command writes manifest.json next to its outputs with the full config,
the seed, the code version and a UTC timestamp, enough to replay the run on
one worker.
"""

import datetime
import json
import logging
import os
import platform

import numpy as np
import pandas as pd
import pytz
import torch

import config
from utils import rng

logger = logging.getLogger(__name__)

MANIFEST_FILE = "manifest.json"


def now_utc() -> datetime.datetime:
    return datetime.datetime.now(pytz.UTC)


def ensure_dir(path) -> str:
    os.makedirs(path, exist_ok=True)
    return str(path)


def _default(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"{type(value).__name__} is not JSON serializable")


def write_json(path, payload: dict) -> str:
    ensure_dir(os.path.dirname(os.path.abspath(path)))
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True, default=_default)
    return str(path)


def read_json(path) -> dict:
    with open(path, encoding="utf-8") as f:
        return json.load(f)


def write_table(path, frame: pd.DataFrame) -> str:
    ensure_dir(os.path.dirname(os.path.abspath(path)))
    frame.to_csv(path, index=False)
    return str(path)


def write_manifest(out_dir, command: str, cfg: config.RunConfig | None = None, **extra) -> str:
    manifest = {
        "app": config.APP_NAME,
        "code_version": config.VERSION,
        "command": command,
        "created_at": now_utc().isoformat(),
        "python": platform.python_version(),
        "torch": torch.__version__,
        "numpy": np.__version__,
        "stream_offsets": {
            "prior": rng.PRIOR_STREAM,
            "omega": rng.OMEGA_STREAM,
            "mh": rng.MH_STREAM,
            "init": rng.INIT_STREAM,
            "eval": rng.EVAL_STREAM,
            "audit": rng.AUDIT_STREAM,
        },
    }
    if cfg is not None:
        manifest["config"] = cfg.to_dict()
        manifest["seed"] = cfg.run.seed
    manifest.update(extra)

    path = write_json(os.path.join(out_dir, MANIFEST_FILE), manifest)
    logger.debug("Manifest written to %s", path)
    return path
