"""
Flow parameter layout (LOCKED)

This file is the SINGLE SOURCE OF TRUTH for:
- Parameter names per CNF variant
- Which variants share weights over D₄ orbits
- Which variants keep the φ -> -φ symmetry

Changing this file REQUIRES retraining (old checkpoints are rejected).
"""

import config

SCHEMA_VERSION = "1.0.0"

# IMPORTANT:
# - Order matters (checkpoint layout)
# - Only append new names at the END
CNF_PARAMETERS = {
    config.FULL_EQUIVARIANT: ["W_sin", "omega"],
    config.TRANSLATION_ONLY: ["W_sin", "omega"],
    config.NO_SIGN_FLIP: ["W_sin", "W_cos", "W_const", "omega"],
    config.NEITHER: ["W_sin", "W_cos", "W_const", "omega"],
}


def cnf_parameter_names(variant: str) -> list[str]:
    return list(CNF_PARAMETERS[variant])


def uses_orbits(variant: str) -> bool:
    """Rotation/mirror sharing of W over D₄ orbits."""
    return variant in (config.FULL_EQUIVARIANT, config.NO_SIGN_FLIP)


def keeps_sign_flip(variant: str) -> bool:
    """Odd (sine-only) basis, hence φ -> -φ equivariance."""
    return variant in (config.FULL_EQUIVARIANT, config.TRANSLATION_ONLY)
