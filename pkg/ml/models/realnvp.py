"""
RealNVP baseline: affine coupling layers on a checkerboard partition.

Coupling layer (frozen sites a, active sites b):
    φ_a = z_a
    φ_b = z_b · exp(ŝ(z_a)) + t(z_a)
log|det J| = Σ over active sites of ŝ, with ŝ = tanh(raw) so s = exp(ŝ) > 0.

Conditioner: circular-padded CNN (hidden channels 8, 8; kernel 3; leaky
rectifier, negative slope 0.01). Final conv starts at zero, so every layer
starts as the identity.
"""

import torch
from torch import nn

from ml.models.base import FlowModel
from physics.lattice import LatticeGeometry
from utils.errors import EvaluationError, ValidationError
from utils.rng import INIT_STREAM, Stream


def checkerboard(geo: LatticeGeometry, parity: int) -> torch.Tensor:
    """1.0 on sites with (x1 + x2) % 2 == parity (the frozen half), else 0.0."""
    x1, x2 = torch.meshgrid(torch.arange(geo.L), torch.arange(geo.L), indexing="ij")
    return ((x1 + x2) % 2 == parity).to(torch.float64)


def make_conditioner(hidden_channels, kernel_size: int, negative_slope: float) -> nn.Sequential:
    channels = [1, *hidden_channels, 2]
    layers = []
    for i, (c_in, c_out) in enumerate(zip(channels[:-1], channels[1:])):
        layers.append(
            nn.Conv2d(
                c_in,
                c_out,
                kernel_size,
                padding=kernel_size // 2,
                padding_mode="circular",
                dtype=torch.float64,
            )
        )
        if i < len(channels) - 2:
            layers.append(nn.LeakyReLU(negative_slope))
    return nn.Sequential(*layers)


# =====================================================
# COUPLING LAYER
# =====================================================
class AffineCoupling(nn.Module):
    def __init__(self, geo: LatticeGeometry, parity: int, hidden_channels=(8, 8),
                 kernel_size: int = 3, negative_slope: float = 0.01):
        super().__init__()
        self.parity = parity
        frozen = checkerboard(geo, parity)
        self.register_buffer("frozen", frozen)
        self.register_buffer("active", 1.0 - frozen)
        self.net = make_conditioner(hidden_channels, kernel_size, negative_slope)

    def _scale_shift(self, frozen_part: torch.Tensor):
        out = self.net(frozen_part.unsqueeze(1))
        return torch.tanh(out[:, 0]), out[:, 1]

    def forward(self, z: torch.Tensor):
        frozen_part = self.frozen * z
        s_hat, t = self._scale_shift(frozen_part)
        phi = frozen_part + self.active * (z * torch.exp(s_hat) + t)
        logdet = (self.active * s_hat).sum(dim=(-2, -1))
        return phi, logdet

    def inverse(self, phi: torch.Tensor):
        frozen_part = self.frozen * phi
        s_hat, t = self._scale_shift(frozen_part)
        z = frozen_part + self.active * ((phi - t) * torch.exp(-s_hat))
        logdet = -(self.active * s_hat).sum(dim=(-2, -1))
        return z, logdet


# =====================================================
# STACK
# =====================================================
class CouplingStack(FlowModel):
    kind = "realnvp"

    def __init__(self, geo: LatticeGeometry, n_layers: int = 16, hidden_channels=(8, 8),
                 kernel_size: int = 3, negative_slope: float = 0.01,
                 init_scale: float = 1e-2, init_seed: int = 0):
        super().__init__(geo)
        if geo.L < 2:
            raise ValidationError("The flow needs L >= 2")
        self.n_layers = n_layers
        self.hidden_channels = [int(c) for c in hidden_channels]
        self.kernel_size = kernel_size
        self.negative_slope = negative_slope
        self.init_scale = init_scale
        self.init_seed = init_seed
        self.layers = nn.ModuleList(
            AffineCoupling(geo, i % 2, self.hidden_channels, kernel_size, negative_slope)
            for i in range(n_layers)
        )
        self._initialize(Stream(init_seed, INIT_STREAM))

    @torch.no_grad()
    def _initialize(self, stream: Stream):
        for layer in self.layers:
            convs = [m for m in layer.net if isinstance(m, nn.Conv2d)]
            for conv in convs[:-1]:
                conv.weight.copy_(self.init_scale * stream.normal_tensor(conv.weight.shape))
                conv.bias.zero_()
            convs[-1].weight.zero_()
            convs[-1].bias.zero_()

    def describe(self) -> dict:
        return {
            "kind": self.kind,
            "L": self.geo.L,
            "n_layers": self.n_layers,
            "hidden_channels": self.hidden_channels,
            "kernel_size": self.kernel_size,
            "negative_slope": self.negative_slope,
            "init_scale": self.init_scale,
            "init_seed": self.init_seed,
            # choices the published baseline leaves open
            "conditioner_activation": "leaky_relu",
            "scale_squash": "tanh",
        }

    def forward(self, z: torch.Tensor):
        phi = z
        logdet = torch.zeros(z.shape[0], dtype=z.dtype, device=z.device)
        for layer in self.layers:
            phi, ld = layer(phi)
            logdet = logdet + ld
        _check_finite(phi, logdet)
        return phi, logdet

    def inverse(self, phi: torch.Tensor):
        z = phi
        logdet = torch.zeros(phi.shape[0], dtype=phi.dtype, device=phi.device)
        for layer in reversed(self.layers):
            z, ld = layer.inverse(z)
            logdet = logdet + ld
        _check_finite(z, logdet)
        return z, logdet


def _check_finite(x: torch.Tensor, logdet: torch.Tensor):
    if not (torch.isfinite(x).all() and torch.isfinite(logdet).all()):
        raise EvaluationError("Non-finite activations in the coupling stack")


def coupling_forward(z: torch.Tensor, layer: AffineCoupling) -> torch.Tensor:
    return layer(z)[0]


def stack_forward(z: torch.Tensor, stack: CouplingStack):
    return stack.forward(z)


def stack_inverse(phi: torch.Tensor, stack: CouplingStack):
    return stack.inverse(phi)
