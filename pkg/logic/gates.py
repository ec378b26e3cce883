"""
Pass/fail gates over finished runs.
Used by the free-check, audit and ablation commands as a HARD RULE GATE.

DESIGN RULES (LOCKED):
- Gates NEVER raise; bad or missing inputs become a block_reason
- Gates do not compute statistics; callers pass measured values in
- Output contract is STABLE
"""

import math
from typing import Dict, List

import config

FREE_CHECK_MIN_ACCEPTANCE = 0.9
FREE_CHECK_SIGMAS = 3.0
EQUIVARIANCE_TOLERANCE = 1e-6


def _result(allowed: bool, block_reason, reasons: List[str], snapshot: Dict) -> Dict:
    """
    OUTPUT CONTRACT (LOCKED):
    - allowed: bool
    - block_reason: str | None
    - reasons: list[str]
    - snapshot: dict
    """
    return {
        "allowed": allowed,
        "block_reason": block_reason,
        "reasons": reasons,
        "snapshot": snapshot,
    }


def _is_number(value) -> bool:
    return isinstance(value, (int, float)) and math.isfinite(value)


# =====================================================
# 🔍 FREE-THEORY END-TO-END CHECK
# =====================================================
def evaluate_free_check(acceptance, chi2, chi2_err, m_sq,
                        min_acceptance: float = FREE_CHECK_MIN_ACCEPTANCE,
                        n_sigma: float = FREE_CHECK_SIGMAS) -> Dict:
    snapshot = {
        "acceptance": acceptance,
        "chi2": chi2,
        "chi2_err": chi2_err,
        "chi2_exact": None,
        "pull": None,
    }

    # -------------------------------------------------
    # 1️⃣ INPUT SANITY (HARD FAIL)
    # -------------------------------------------------
    if not all(_is_number(v) for v in (acceptance, chi2, chi2_err, m_sq)):
        return _result(False, "Missing or non-finite measurement", ["Missing or non-finite measurement"], snapshot)
    if m_sq <= 0:
        return _result(False, "Free theory needs m_sq > 0", ["Free theory needs m_sq > 0"], snapshot)

    reasons: List[str] = []
    exact = 1.0 / (2.0 * m_sq)
    snapshot["chi2_exact"] = exact

    # -------------------------------------------------
    # 2️⃣ ACCEPTANCE
    # -------------------------------------------------
    if acceptance < min_acceptance:
        reasons.append(f"Acceptance {acceptance:.3f} below {min_acceptance:.2f}")

    # -------------------------------------------------
    # 3️⃣ SUSCEPTIBILITY VS 1/(2m²)
    # -------------------------------------------------
    if chi2_err <= 0:
        reasons.append("χ₂ standard error is not positive")
    else:
        pull = (chi2 - exact) / chi2_err
        snapshot["pull"] = pull
        if abs(pull) > n_sigma:
            reasons.append(f"χ₂ = {chi2:.4f} is {abs(pull):.1f}σ from {exact:.4f}")

    if reasons:
        return _result(False, reasons[0], reasons, snapshot)
    return _result(True, None, ["Free-theory check passed"], snapshot)


# =====================================================
# 🧠 EQUIVARIANCE AUDIT
# =====================================================
def evaluate_equivariance_audit(max_spread, expect_invariant: bool,
                                tolerance: float = EQUIVARIANCE_TOLERANCE) -> Dict:
    """
    Invariant models must keep log q flat over the group.
    Non-invariant models are only reported, never blocked.
    """
    snapshot = {"max_spread": max_spread, "tolerance": tolerance, "expect_invariant": expect_invariant}

    if not _is_number(max_spread):
        return _result(False, "Audit produced no finite spread", ["Audit produced no finite spread"], snapshot)

    if not expect_invariant:
        return _result(True, None, [f"Spread {max_spread:.3e} (model not built invariant)"], snapshot)

    if max_spread > tolerance:
        reason = f"log q spread {max_spread:.3e} exceeds {tolerance:.0e}"
        return _result(False, reason, [reason], snapshot)
    return _result(True, None, [f"log q spread {max_spread:.3e} within {tolerance:.0e}"], snapshot)


# =====================================================
# 📊 ABLATION ORDERING
# =====================================================
def evaluate_ablation_order(final_ess: Dict[str, Dict[int, float]]) -> Dict:
    """
    final_ess: variant -> {seed: final ESS}.

    HARD: mean ESS(full_equivariant) >= mean ESS(neither)
    SOFT: full >= translation_only and full >= no_sign_flip (reported with seeds)
    """
    means = {}
    for variant in config.VARIANTS:
        values = [v for v in (final_ess.get(variant) or {}).values() if _is_number(v)]
        means[variant] = sum(values) / len(values) if values else None

    snapshot = {"mean_ess": means, "seeds": {k: sorted(v) for k, v in final_ess.items()}}

    full = means[config.FULL_EQUIVARIANT]
    if full is None or means[config.NEITHER] is None:
        return _result(False, "Missing ablation arms", ["Missing ablation arms"], snapshot)

    reasons: List[str] = []
    for soft in (config.TRANSLATION_ONLY, config.NO_SIGN_FLIP):
        if means[soft] is not None and means[soft] > full:
            seeds = snapshot["seeds"].get(soft, [])
            reasons.append(f"{soft} mean ESS {means[soft]:.3f} > full {full:.3f} (seeds {seeds})")

    if means[config.NEITHER] > full:
        reason = f"neither mean ESS {means[config.NEITHER]:.3f} > full {full:.3f}"
        return _result(False, reason, [reason, *reasons], snapshot)

    return _result(True, None, reasons or ["Full equivariance leads every arm"], snapshot)
