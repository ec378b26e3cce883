"""
Reverse-KL training of a flow sampler.

RULES:
- Loss = mean_b [log q(φᵇ) + S(φᵇ)], φᵇ = f(zᵇ), zᵇ ~ N(0, I); log Z stays unknown
- LR drop is indexed by optimizer step, not epoch
- Per-epoch ESS uses fresh samples from the EVAL stream, never training batches
- Checkpoints: every `checkpoint_every` epochs, on new best ESS, at the end,
  and right before raising on a non-finite loss
"""

import logging
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np
import torch
from scipy.special import logsumexp

import config
from ml.inference.model_loader import build_model, load_checkpoint, save_checkpoint
from ml.models.base import FlowModel
from ml.training.grad import ParameterSet, value_and_grad
from ml.training.metrics_log import EpochRecord, read_metrics, write_metrics
from ml.training.optim import (
    adam_state_arrays,
    adam_state_meta,
    adam_step,
    init_adam_state,
    lr_schedule,
    restore_adam_state,
)
from physics.phi4 import Phi4Couplings, log_unnormalized_density
from utils.errors import EstimatorError, NumericError, TrainingError, ValidationError
from utils.formatters import format_epoch_line
from utils.rng import streams

logger = logging.getLogger(__name__)

METRICS_FILE = "metrics.csv"
CHECKPOINT_DIR = "checkpoints"
BEST_CHECKPOINT = "best.lflow"
LAST_CHECKPOINT = "last.lflow"
HALT_CHECKPOINT = "halt.lflow"


@dataclass
class RunMetrics:
    records: list = field(default_factory=list)
    best_ess: float = -math.inf
    stopped_early: bool = False

    @property
    def epochs_completed(self) -> int:
        return len(self.records)

    @property
    def final_ess(self) -> float | None:
        return self.records[-1].ess if self.records else None


@dataclass
class TrainResult:
    model: FlowModel
    metrics: RunMetrics
    checkpoint: str | None = None


# =====================================================
# LOSS AND ESS
# =====================================================
def reverse_kl_loss(model: FlowModel, z_batch: torch.Tensor, couplings: Phi4Couplings) -> torch.Tensor:
    phi, log_q = model.sample(z_batch)
    return (log_q - log_unnormalized_density(phi, couplings)).mean()


def ess(log_p_unnorm, log_q) -> float:
    """(mean w)² / mean w², w = p̃/q, evaluated in log space."""
    log_p_unnorm = np.asarray(log_p_unnorm, dtype=np.float64).reshape(-1)
    log_q = np.asarray(log_q, dtype=np.float64).reshape(-1)
    if log_p_unnorm.shape != log_q.shape or log_q.size < 1:
        raise ValidationError("ess needs matching, non-empty log_p and log_q")

    log_w = log_p_unnorm - log_q
    if np.isnan(log_w).any():
        raise EstimatorError("NaN importance weight")
    if not np.isfinite(log_w.max()):
        raise EstimatorError("All importance weights are zero")

    n = log_w.size
    shifted = log_w - log_w.max()
    value = math.exp(2.0 * logsumexp(shifted) - logsumexp(2.0 * shifted) - math.log(n))
    return min(value, 1.0)


@torch.no_grad()
def evaluate_ess(model: FlowModel, couplings: Phi4Couplings, n: int, stream,
                 chunk_size: int = 100) -> float:
    L = model.geo.L
    log_p, log_q = [], []
    remaining = n
    while remaining > 0:
        size = min(chunk_size, remaining)
        z = stream.normal_tensor((size, L, L))
        phi, lq = model.sample(z)
        log_p.append(log_unnormalized_density(phi, couplings).numpy())
        log_q.append(lq.numpy())
        remaining -= size
    return ess(np.concatenate(log_p), np.concatenate(log_q))


# =====================================================
# TRAINING LOOP
# =====================================================
def train(cfg: config.RunConfig, out_dir=None, resume=None) -> TrainResult:
    """
    Runs cfg.train.epochs epochs of cfg.train.steps_per_epoch Adam steps.
    With out_dir, writes metrics.csv and checkpoints/ there.
    With resume, continues from a checkpoint written by this function.
    """
    torch.set_num_threads(cfg.run.workers)
    tc = cfg.train
    couplings = Phi4Couplings(cfg.couplings.m_sq, cfg.couplings.lam)
    rng = streams(cfg.run.seed)

    if resume is not None:
        model, arrays, meta = load_checkpoint(resume)
        params = ParameterSet.from_module(model)
        adam = restore_adam_state(params, arrays, meta["adam"])
        for name, state in meta["streams"].items():
            rng[name].set_state(state)
        progress = meta["progress"]
        start_epoch = int(progress["epoch"])
        step = int(progress["step"])
        metrics = RunMetrics(best_ess=float(progress["best_ess"]))
        elapsed_offset = float(progress.get("elapsed_seconds", 0.0))
        if out_dir is not None:
            metrics.records = read_metrics(os.path.join(out_dir, METRICS_FILE), start_epoch)
        logger.info("Resuming from %s at epoch %d (step %d)", resume, start_epoch, step)
    else:
        model = build_model(cfg)
        params = ParameterSet.from_module(model)
        adam = init_adam_state(params, tc.beta1, tc.beta2, tc.eps)
        start_epoch, step = 0, 0
        metrics = RunMetrics()
        elapsed_offset = 0.0

    logger.info(
        "Training %s (%d parameters) on L=%d, m²=%g, λ=%g",
        model.kind, model.parameter_count(), model.geo.L, couplings.m_sq, couplings.lam,
    )

    def checkpoint(name: str, epoch: int) -> str | None:
        if out_dir is None:
            return None
        path = os.path.join(out_dir, CHECKPOINT_DIR, name)
        save_checkpoint(
            path,
            model,
            extra_arrays=adam_state_arrays(adam),
            meta={
                "config": cfg.to_dict(),
                "adam": adam_state_meta(adam),
                "streams": {k: s.get_state() for k, s in rng.items()},
                "progress": {
                    "epoch": epoch,
                    "step": step,
                    "best_ess": metrics.best_ess,
                    "elapsed_seconds": elapsed(),
                },
            },
        )
        return path

    def loss_program(z):
        return reverse_kl_loss(model, z, couplings)

    run_start = time.perf_counter()

    def elapsed() -> float:
        return elapsed_offset + time.perf_counter() - run_start

    last_path = None
    L = model.geo.L

    for epoch in range(start_epoch, tc.epochs):
        epoch_start = time.perf_counter()
        losses = []
        lr = lr_schedule(step, tc.lr, tc.lr_drop_step, tc.lr_drop_factor)

        for _ in range(tc.steps_per_epoch):
            lr = lr_schedule(step, tc.lr, tc.lr_drop_step, tc.lr_drop_factor)
            z = rng["prior"].normal_tensor((tc.batch_size, L, L))
            try:
                loss, grads = value_and_grad(loss_program, params, z)
            except NumericError as e:
                diagnostics = {
                    "epoch": epoch,
                    "step": step,
                    "batch_size": tc.batch_size,
                    "max_abs_z": float(z.abs().max()),
                    "cause": str(e),
                    "checkpoint": checkpoint(HALT_CHECKPOINT, epoch),
                }
                logger.error("Non-finite training step: %s", diagnostics)
                raise TrainingError(f"Training halted at step {step}: {e}", diagnostics) from e

            if len(params):
                adam_step(params, grads, adam, lr)
            step += 1
            losses.append(loss)

        ess_value = evaluate_ess(model, couplings, tc.ess_samples, rng["eval"], tc.batch_size)
        record = EpochRecord(
            epoch=epoch,
            loss=float(np.mean(losses)),
            ess=ess_value,
            lr=lr,
            seconds=time.perf_counter() - epoch_start,
            elapsed_seconds=elapsed(),
        )
        metrics.records.append(record)
        logger.info(format_epoch_line(record.epoch, record.loss, record.ess, record.lr, record.seconds))

        if out_dir is not None:
            write_metrics(os.path.join(out_dir, METRICS_FILE), metrics.records)

        if ess_value > metrics.best_ess:
            metrics.best_ess = ess_value
            checkpoint(BEST_CHECKPOINT, epoch + 1)
        if (epoch + 1) % tc.checkpoint_every == 0:
            checkpoint(f"epoch_{epoch + 1:05d}.lflow", epoch + 1)

        if tc.max_seconds and time.perf_counter() - run_start >= tc.max_seconds:
            logger.warning("Wall-clock budget of %.0fs reached after epoch %d", tc.max_seconds, epoch)
            metrics.stopped_early = True
            last_path = checkpoint(LAST_CHECKPOINT, epoch + 1)
            break
    else:
        last_path = checkpoint(LAST_CHECKPOINT, max(start_epoch, tc.epochs))

    return TrainResult(model=model, metrics=metrics, checkpoint=last_path)
