import pandas as pd


def format_epoch_line(epoch: int, loss: float, ess: float, lr: float, seconds: float) -> str:
    return (
        f"epoch {epoch:5d} | loss {loss:12.5f} | ESS {ess:6.2%} | "
        f"lr {lr:.1e} | {seconds:8.1f}s"
    )


def format_rate(value: float) -> str:
    return f"{value:.2%}"


def rolling_average(series, window: int = 200) -> pd.Series:
    """
    Trailing rolling mean used for ESS curves.
    Report-time only: stored metrics stay raw.
    """
    return pd.Series(series, dtype=float).rolling(window, min_periods=1).mean()
