import logging
import os

import config
from ml.training.train_flow import METRICS_FILE, TrainResult, train
from services.artifacts import ensure_dir, write_manifest
from utils.formatters import format_rate, rolling_average

logger = logging.getLogger(__name__)


def cmd_train(cfg: config.RunConfig, resume=None) -> TrainResult:
    out_dir = ensure_dir(cfg.run.output_dir)
    config.dump_config(cfg, os.path.join(out_dir, "config.toml"))
    write_manifest(out_dir, "train", cfg, resume=str(resume) if resume else None)

    result = train(cfg, out_dir=out_dir, resume=resume)

    records = result.metrics.records
    if records:
        smoothed = rolling_average([r.ess for r in records], cfg.train.rolling_window)
        logger.info(
            "Finished %d epochs | final ESS %s | rolling ESS %s | best ESS %s",
            len(records),
            format_rate(records[-1].ess),
            format_rate(float(smoothed.iloc[-1])),
            format_rate(result.metrics.best_ess),
        )
    logger.info("Metrics: %s", os.path.join(out_dir, METRICS_FILE))
    return result
