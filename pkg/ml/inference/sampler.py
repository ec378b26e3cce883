"""
Independent Metropolis–Hastings with flow proposals.

ρ = min(1, [q(φ_old) / p̃(φ_old)] · [p̃(φ') / q(φ')])

RULES:
- Everything in log space; the incumbent's log q / log p̃ are cached
- The first proposal is accepted unconditionally
- A rejected step repeats the previous sample exactly
- Proposals with non-finite φ, log q or log p̃ are rejected and tallied
- Uniforms come from the MH stream only; proposals from their own stream
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
import torch
from tqdm import tqdm

from ml.models.base import FlowModel
from physics.phi4 import Phi4Couplings, log_unnormalized_density
from utils.errors import NumericError, SamplingError, ValidationError

logger = logging.getLogger(__name__)


# =====================================================
# CHAIN RECORD
# =====================================================
@dataclass
class ChainRecord:
    samples: np.ndarray      # (N, L, L) chain states
    accepted: np.ndarray     # (N,) bool
    log_q: np.ndarray        # (N,) proposal log q at each step
    log_p: np.ndarray        # (N,) proposal log p̃ at each step
    non_finite: int = 0

    def __len__(self):
        return len(self.accepted)

    @property
    def acceptance_rate(self) -> float:
        return acceptance_rate(self)


def acceptance_rate(record: ChainRecord) -> float:
    if len(record.accepted) == 0:
        raise ValidationError("Empty chain")
    return float(np.count_nonzero(record.accepted)) / len(record.accepted)


# =====================================================
# PROPOSALS
# =====================================================
class FlowProposal:
    """i.i.d. draws φ = f(z), z ~ N(0, I) from the PRIOR stream, with exact log q."""

    def __init__(self, model: FlowModel, stream):
        self.model = model
        self.stream = stream
        self.shape = (model.geo.L, model.geo.L)

    @torch.no_grad()
    def draw(self, n: int):
        z = self.stream.normal_tensor((n, *self.shape))
        try:
            phi, log_q = self.model.sample(z)
            return phi.numpy(), log_q.numpy()
        except NumericError:
            # one bad draw must not poison the whole chunk
            phi = np.full((n, *self.shape), np.nan)
            log_q = np.full(n, np.nan)
            for i in range(n):
                try:
                    p, lq = self.model.sample(z[i : i + 1])
                    phi[i], log_q[i] = p[0].numpy(), float(lq[0])
                except NumericError:
                    pass
            return phi, log_q


class GaussianProposal:
    """Independent per-site N(mean, std²) proposal."""

    def __init__(self, shape, stream, mean: float = 0.0, std: float = 1.0):
        if std <= 0:
            raise ValidationError(f"std must be > 0, got {std}")
        self.shape = tuple(shape)
        self.stream = stream
        self.mean = mean
        self.std = std

    def log_density(self, phi: np.ndarray) -> np.ndarray:
        u = (phi - self.mean) / self.std
        D = int(np.prod(self.shape))
        axes = tuple(range(-len(self.shape), 0))
        return (
            -0.5 * (u * u).sum(axis=axes)
            - D * math.log(self.std)
            - 0.5 * D * math.log(2.0 * math.pi)
        )

    def draw(self, n: int):
        phi = self.mean + self.std * self.stream.normal((n, *self.shape))
        return phi, self.log_density(phi)


def phi4_target(couplings: Phi4Couplings):
    """log p̃ = −S for a batch of numpy fields."""
    def log_target(phi: np.ndarray) -> np.ndarray:
        with torch.no_grad():
            return log_unnormalized_density(torch.as_tensor(phi, dtype=torch.float64), couplings).numpy()
    return log_target


def _evaluate_target(log_target, phi: np.ndarray) -> np.ndarray:
    try:
        return np.asarray(log_target(phi), dtype=np.float64).reshape(-1)
    except NumericError:
        out = np.full(len(phi), np.nan)
        for i in range(len(phi)):
            if not np.isfinite(phi[i]).all():
                continue
            try:
                out[i] = float(np.asarray(log_target(phi[i : i + 1])).reshape(-1)[0])
            except NumericError:
                pass
        return out


def batched_proposals(proposal, log_target, n: int, chunk_size: int = 100):
    """Yields (φ', log q, log p̃) one proposal at a time, generated chunk-wise."""
    if chunk_size < 1:
        raise ValidationError(f"chunk_size must be >= 1, got {chunk_size}")
    remaining = n
    while remaining > 0:
        size = min(chunk_size, remaining)
        phi, log_q = proposal.draw(size)
        log_p = _evaluate_target(log_target, phi)
        for i in range(size):
            yield phi[i], float(log_q[i]), float(log_p[i])
        remaining -= size


# =====================================================
# CHAIN
# =====================================================
def mh_chain(proposal, log_target, n_steps: int, stream, chunk_size: int = 100,
             progress: bool = False) -> ChainRecord:
    if n_steps < 1:
        raise ValidationError(f"n_steps must be >= 1, got {n_steps}")

    samples = np.empty((n_steps, *proposal.shape))
    accepted = np.zeros(n_steps, dtype=bool)
    log_qs = np.empty(n_steps)
    log_ps = np.empty(n_steps)
    non_finite = 0

    current = None
    current_log_w = None
    proposals = batched_proposals(proposal, log_target, n_steps, chunk_size)
    uniforms = None

    for i, (phi, log_q, log_p) in enumerate(
        tqdm(proposals, total=n_steps, disable=not progress, desc="MH")
    ):
        if i % chunk_size == 0:
            uniforms = stream.uniform(min(chunk_size, n_steps - i))
        u = uniforms[i % chunk_size]

        log_qs[i], log_ps[i] = log_q, log_p
        finite = math.isfinite(log_q) and math.isfinite(log_p) and np.isfinite(phi).all()

        if i == 0:
            if not finite:
                raise SamplingError("First proposal is not finite; cannot start the chain")
            accept = True
        elif not finite:
            non_finite += 1
            accept = False
        else:
            log_rho = (log_p - log_q) - current_log_w
            accept = log_rho >= 0.0 or u == 0.0 or math.log(u) < log_rho

        if accept:
            current = phi
            current_log_w = log_p - log_q
            accepted[i] = True
        samples[i] = current

    if non_finite:
        logger.warning("%d of %d proposals were non-finite and rejected", non_finite, n_steps)

    record = ChainRecord(samples, accepted, log_qs, log_ps, non_finite)
    logger.info("MH chain: %d steps, acceptance %.4f", n_steps, record.acceptance_rate)
    return record


def flow_chain(model: FlowModel, couplings: Phi4Couplings, n_steps: int, rng: dict,
               chunk_size: int = 100, progress: bool = False) -> ChainRecord:
    """mh_chain with a flow proposal on the φ⁴ target, using the run's streams."""
    return mh_chain(
        FlowProposal(model, rng["prior"]),
        phi4_target(couplings),
        n_steps,
        rng["mh"],
        chunk_size=chunk_size,
        progress=progress,
    )
