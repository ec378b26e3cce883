"""
Estimators for validating samples: connected two-point function, two-point
susceptibility and pole mass, with jackknife errors.

Ĝ(x) = (1/D) Σ_y [ mean_i φ_i(y)φ_i(y+x) − m(y) m(y+x) ],  m = sample mean
χ̂₂   = Σ_x Ĝ(x)
G_c(x₂) = (1/L) Σ_{x₁} Ĝ(x₁, x₂)

Pole mass, two readings:
- verbatim: average over x₂ = 1..L−1 of (G_c(x₂−1) + G_c(x₂+1)) / (2 G_c(x₂))
  (this is cosh(m) for an ideal correlator)
- arccosh (reported): average of arccosh of the same ratios

Samples are numpy arrays (N, L, L). Chains may contain repeated states;
that is the correct MCMC average.
"""

import logging
from dataclasses import dataclass

import numpy as np

from utils.errors import EstimatorError, ValidationError

logger = logging.getLogger(__name__)

POLE_MASS_VARIANTS = ("arccosh", "verbatim")
JACKKNIFE_BLOCKS = 50


@dataclass
class TwoPointEstimate:
    G_hat: np.ndarray   # (L, L), indexed by displacement
    n_samples: int

    @property
    def L(self) -> int:
        return self.G_hat.shape[0]


def _check_samples(samples) -> np.ndarray:
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 3 or samples.shape[1] != samples.shape[2]:
        raise ValidationError(f"Expected samples shaped (N, L, L), got {samples.shape}")
    if samples.shape[0] < 2:
        raise EstimatorError(f"Two-point estimator needs at least 2 samples, got {samples.shape[0]}")
    return samples


def _autocorrelation(fields: np.ndarray) -> np.ndarray:
    """(1/D) Σ_y f(y) f(y+x) for each leading index, via FFT on the torus."""
    L = fields.shape[-1]
    f_hat = np.fft.rfft2(fields)
    return np.fft.irfft2(np.conj(f_hat) * f_hat, s=(L, L)) / (L * L)


# =====================================================
# TWO-POINT FUNCTION
# =====================================================
def g_hat(samples) -> TwoPointEstimate:
    samples = _check_samples(samples)
    mean_field = samples.mean(axis=0)
    G = _autocorrelation(samples).mean(axis=0) - _autocorrelation(mean_field)
    return TwoPointEstimate(G, samples.shape[0])


def symmetrize(est: TwoPointEstimate) -> TwoPointEstimate:
    """Average Ĝ(x) and Ĝ(−x)."""
    flipped = np.roll(est.G_hat[::-1, ::-1], 1, axis=(0, 1))
    return TwoPointEstimate(0.5 * (est.G_hat + flipped), est.n_samples)


def chi2_hat(est: TwoPointEstimate) -> float:
    return float(est.G_hat.sum())


def g_c(est: TwoPointEstimate, x2: int) -> float:
    return float(est.G_hat[:, x2 % est.L].mean())


def g_c_profile(est: TwoPointEstimate) -> np.ndarray:
    return est.G_hat.mean(axis=0)


# =====================================================
# POLE MASS
# =====================================================
def pole_mass_from_profile(profile, variant: str = "arccosh") -> float:
    if variant not in POLE_MASS_VARIANTS:
        raise ValidationError(f"Unknown pole-mass variant {variant!r}")
    profile = np.asarray(profile, dtype=np.float64)
    L = profile.shape[0]
    if L < 2:
        raise EstimatorError("Pole mass needs L >= 2")

    interior = np.arange(1, L)
    centre = profile[interior]
    if not (centre > 0).all():
        raise EstimatorError("Correlator is not positive on interior rows; pole mass undefined")

    ratios = (profile[(interior - 1) % L] + profile[(interior + 1) % L]) / (2.0 * centre)
    if variant == "verbatim":
        return float(ratios.mean())

    below = ratios < 1.0
    if below.any():
        logger.warning("Clipping %d effective-mass ratios below 1 before arccosh", int(below.sum()))
        ratios = np.maximum(ratios, 1.0)
    return float(np.arccosh(ratios).mean())


def pole_mass_hat(est: TwoPointEstimate, variant: str = "arccosh") -> float:
    return pole_mass_from_profile(g_c_profile(est), variant)


# =====================================================
# RESAMPLING
# =====================================================
def thin(samples, burn_in: int = 0, every: int = 1) -> np.ndarray:
    if burn_in < 0 or every < 1:
        raise ValidationError("burn_in must be >= 0 and thinning >= 1")
    kept = np.asarray(samples)[burn_in::every]
    if len(kept) == 0:
        raise ValidationError("No samples left after burn-in and thinning")
    return kept


def jackknife(samples, estimator, n_blocks: int = JACKKNIFE_BLOCKS) -> tuple[float, float]:
    """Returns (estimate on all samples, blocked jackknife standard error)."""
    samples = np.asarray(samples)
    n = len(samples)
    n_blocks = min(n_blocks, n)
    if n_blocks < 2:
        raise EstimatorError("Jackknife needs at least 2 blocks")

    edges = np.linspace(0, n, n_blocks + 1).astype(int)
    leave_out = np.array([
        estimator(np.concatenate([samples[: edges[k]], samples[edges[k + 1]:]]))
        for k in range(n_blocks)
    ])
    spread = ((leave_out - leave_out.mean()) ** 2).sum()
    return float(estimator(samples)), float(np.sqrt((n_blocks - 1) / n_blocks * spread))


# =====================================================
# REPORT
# =====================================================
def measure(samples, n_blocks: int = JACKKNIFE_BLOCKS) -> dict:
    samples = _check_samples(samples)
    L = samples.shape[-1]
    est = g_hat(samples)

    chi2, chi2_err = jackknife(samples, lambda s: chi2_hat(g_hat(s)), n_blocks)
    report = {
        "n_samples": int(samples.shape[0]),
        "L": int(L),
        "jackknife_blocks": int(min(n_blocks, samples.shape[0])),
        "chi2": chi2,
        "chi2_err": chi2_err,
        "g_c": g_c_profile(est).tolist(),
    }

    for variant in POLE_MASS_VARIANTS:
        key = "pole_mass" if variant == "arccosh" else "pole_mass_verbatim"
        try:
            value, err = jackknife(samples, lambda s: pole_mass_hat(g_hat(s), variant), n_blocks)
        except EstimatorError as e:
            logger.warning("Pole mass (%s) undefined: %s", variant, e)
            report[key] = None
            report[f"{key}_err"] = None
            report[f"{key}_error"] = str(e)
            continue
        report[key] = value
        report[f"{key}_err"] = err

    if report["pole_mass"] is not None:
        report["m_p_L"] = report["pole_mass"] * L
    return report
