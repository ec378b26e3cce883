"""
The φ⁴ lattice action and the free-theory (λ = 0) oracles.

S(φ) = Σ_x Σ_μ (φ(x) − φ(x+μ))² + Σ_x [m² φ(x)² + λ φ(x)⁴]

The kinetic sum equals φᵀΔφ with Δ = degree − adjacency of the periodic
lattice graph. Fields are torch tensors shaped (..., L, L); the action of a
batch is one scalar per configuration.
"""

import math
from dataclasses import dataclass

import numpy as np
import torch

from physics.lattice import LatticeGeometry
from utils.errors import EvaluationError, ValidationError


# =====================================================
# DOMAIN TYPES
# =====================================================
@dataclass(frozen=True)
class Phi4Couplings:
    m_sq: float
    lam: float

    def __post_init__(self):
        if self.lam < 0:
            raise ValidationError(f"Quartic coupling must be >= 0, got {self.lam}")
        if self.lam == 0 and self.m_sq <= 0:
            raise ValidationError("lam = 0 requires m_sq > 0 (density not normalizable)")


@dataclass
class FieldConfiguration:
    """One field or a batch of fields on a lattice, row-major (..., L, L)."""

    geo: LatticeGeometry
    values: torch.Tensor

    def __post_init__(self):
        self.values = validate_field(self.values, self.geo)

    @property
    def batched(self) -> bool:
        return self.values.dim() == 3


def validate_field(values, geo: LatticeGeometry) -> torch.Tensor:
    values = torch.as_tensor(values)
    if values.dim() not in (2, 3) or tuple(values.shape[-2:]) != (geo.L, geo.L):
        raise ValidationError(
            f"Field shape {tuple(values.shape)} is not (L, L) or (B, L, L) with L={geo.L}"
        )
    if not torch.isfinite(values).all():
        raise ValidationError("Field contains non-finite values")
    return values


# =====================================================
# ACTION
# =====================================================
def laplacian(phi: torch.Tensor) -> torch.Tensor:
    """(Δφ)(x) = 4φ(x) − Σ of the four periodic neighbours."""
    neighbours = (
        torch.roll(phi, 1, dims=-2)
        + torch.roll(phi, -1, dims=-2)
        + torch.roll(phi, 1, dims=-1)
        + torch.roll(phi, -1, dims=-1)
    )
    return 4.0 * phi - neighbours


def action(phi: torch.Tensor, c: Phi4Couplings) -> torch.Tensor:
    if not torch.isfinite(phi).all():
        raise EvaluationError("Action evaluated on a non-finite field")

    # one term per site and forward direction, so at L = 2 each neighbour pair
    # appears twice; this is the φᵀΔφ convention the free-theory oracles use
    kinetic = (phi - torch.roll(phi, -1, dims=-2)) ** 2 + (phi - torch.roll(phi, -1, dims=-1)) ** 2
    phi_sq = phi * phi
    potential = c.m_sq * phi_sq + c.lam * phi_sq * phi_sq
    return (kinetic + potential).sum(dim=(-2, -1))


def action_grad(phi: torch.Tensor, c: Phi4Couplings) -> torch.Tensor:
    return 2.0 * laplacian(phi) + 2.0 * c.m_sq * phi + 4.0 * c.lam * phi ** 3


def log_unnormalized_density(phi: torch.Tensor, c: Phi4Couplings) -> torch.Tensor:
    """log p̃(φ) = −S(φ); log Z never enters density ratios."""
    return -action(phi, c)


# =====================================================
# FREE THEORY ORACLES (λ = 0)
# =====================================================
def laplacian_matrix(geo: LatticeGeometry) -> np.ndarray:
    eye = np.eye(geo.D)
    stencil = eye.reshape(geo.D, geo.L, geo.L)
    shifted = sum(
        np.roll(stencil, shift, axis=axis) for shift in (1, -1) for axis in (1, 2)
    ).reshape(geo.D, geo.D)
    return 4.0 * eye - shifted


def free_theory_covariance(m_sq: float, geo: LatticeGeometry) -> np.ndarray:
    """Covariance of exp(−φᵀΔφ − m²Σφ²), i.e. [2(Δ + m² I)]⁻¹."""
    _check_free_mass(m_sq)
    precision = 2.0 * (laplacian_matrix(geo) + m_sq * np.eye(geo.D))
    return np.linalg.inv(precision)


def free_theory_chi2(m_sq: float, geo: LatticeGeometry) -> float:
    """Zero-momentum covariance 1ᵀC1 / D = 1 / (2m²), for every L."""
    _check_free_mass(m_sq)
    return 1.0 / (2.0 * m_sq)


def free_theory_log_z(m_sq: float, geo: LatticeGeometry) -> float:
    _check_free_mass(m_sq)
    precision = 2.0 * (laplacian_matrix(geo) + m_sq * np.eye(geo.D))
    _, logdet = np.linalg.slogdet(precision)
    return 0.5 * geo.D * math.log(2.0 * math.pi) - 0.5 * logdet


def sample_free_theory(m_sq: float, geo: LatticeGeometry, n: int, stream) -> np.ndarray:
    """Exact Gaussian draws (n, L, L) via a Cholesky factor of the covariance."""
    chol = np.linalg.cholesky(free_theory_covariance(m_sq, geo))
    z = stream.normal((n, geo.D))
    return (z @ chol.T).reshape(n, geo.L, geo.L)


def _check_free_mass(m_sq: float):
    if not m_sq > 0:
        raise ValidationError(f"Free theory needs m_sq > 0, got {m_sq}")
