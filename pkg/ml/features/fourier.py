"""
Fourier feature basis of the CNF vector field.

Sine block: sin(ω_f φ)   (odd, keeps φ -> -φ equivariance)
Cosine block: cos(ω_f φ) (only in variants without sign-flip symmetry)
Feature maps are shaped (B, F, L, L).
"""

import torch


def sine_features(phi: torch.Tensor, omega: torch.Tensor) -> torch.Tensor:
    return torch.sin(omega.view(1, -1, 1, 1) * phi.unsqueeze(1))


def cosine_features(phi: torch.Tensor, omega: torch.Tensor) -> torch.Tensor:
    return torch.cos(omega.view(1, -1, 1, 1) * phi.unsqueeze(1))


def sine_derivative(phi: torch.Tensor, omega: torch.Tensor) -> torch.Tensor:
    """d/dφ sin(ωφ) = ω cos(ωφ)."""
    return omega.view(1, -1, 1, 1) * cosine_features(phi, omega)


def cosine_derivative(phi: torch.Tensor, omega: torch.Tensor) -> torch.Tensor:
    """d/dφ cos(ωφ) = −ω sin(ωφ)."""
    return -omega.view(1, -1, 1, 1) * sine_features(phi, omega)
