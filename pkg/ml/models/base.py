"""
Shared surface of the flow models.

Every flow maps latent z ~ N(0, I) to fields φ and exposes:
- forward(z)   -> (φ, log|det ∂φ/∂z|)
- inverse(φ)   -> (z, log|det ∂z/∂φ|)
- sample(z)    -> (φ, log q(φ))
- log_prob(φ)  -> log q(φ)
"""

import math

import torch
from torch import nn

from physics.lattice import LatticeGeometry


def prior_log_density(z: torch.Tensor) -> torch.Tensor:
    """Unit Gaussian per site, summed over the lattice."""
    D = z.shape[-1] * z.shape[-2]
    return -0.5 * (z * z).sum(dim=(-2, -1)) - 0.5 * D * math.log(2.0 * math.pi)


class FlowModel(nn.Module):
    kind = "flow"

    def __init__(self, geo: LatticeGeometry):
        super().__init__()
        self.geo = geo

    def forward(self, z: torch.Tensor):
        raise NotImplementedError

    def inverse(self, phi: torch.Tensor):
        raise NotImplementedError

    def sample(self, z: torch.Tensor):
        phi, logdet = self.forward(z)
        return phi, prior_log_density(z) - logdet

    def log_prob(self, phi: torch.Tensor) -> torch.Tensor:
        z, logdet_inv = self.inverse(phi)
        return prior_log_density(z) + logdet_inv

    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())

    def describe(self) -> dict:
        """Architecture metadata recorded in checkpoints."""
        return {"kind": self.kind, "L": self.geo.L}
