"""
Per-epoch training metrics (CSV).

COLUMNS (LOCKED): epoch, loss, ess, lr, seconds, elapsed_seconds
- seconds is the wall-clock of that epoch alone
- elapsed_seconds is cumulative over the run and carries across resumes
Stored values are raw; smoothing happens at report time.
"""

import os
from dataclasses import asdict, dataclass

import pandas as pd

METRICS_COLUMNS = ["epoch", "loss", "ess", "lr", "seconds", "elapsed_seconds"]


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    ess: float
    lr: float
    seconds: float
    elapsed_seconds: float


def records_to_frame(records) -> pd.DataFrame:
    return pd.DataFrame([asdict(r) for r in records], columns=METRICS_COLUMNS)


def write_metrics(path, records) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    records_to_frame(records).to_csv(path, index=False)


def read_metrics(path, up_to_epoch: int | None = None) -> list[EpochRecord]:
    """Rows with epoch < up_to_epoch (all rows when None)."""
    if not os.path.exists(path):
        return []

    df = pd.read_csv(path)
    missing = [c for c in METRICS_COLUMNS if c not in df.columns]
    if missing:
        return []
    if up_to_epoch is not None:
        df = df[df["epoch"] < up_to_epoch]

    return [
        EpochRecord(
            int(r.epoch), float(r.loss), float(r.ess), float(r.lr),
            float(r.seconds), float(r.elapsed_seconds),
        )
        for r in df.itertuples(index=False)
    ]
