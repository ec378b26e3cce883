"""
Equivariant continuous normalizing flow for the φ⁴ lattice.

dφ(x)/dt = Σ_{y,a,f} W_{xyaf} K_a(t) sin(ω_f φ(y))

RULES:
- W is shared over translations always, and over D₄ orbits for the
  rotation/mirror-equivariant variants: W_{xyaf} = W_free[[y − x], a, f]
- W starts at 0, so the flow starts as the exact identity
- The divergence is analytic (only the self-displacement weight enters)
- Gradients go through the unrolled RK4 steps (discretize-then-optimize)
"""

import logging
from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

import config
from ml.features.fourier import cosine_derivative, cosine_features, sine_derivative, sine_features
from ml.features.schema import keeps_sign_flip, uses_orbits
from ml.features.time_kernel import TimeKernelSpec, interpolation_kernel
from ml.models.base import FlowModel, prior_log_density
from physics.lattice import (
    LatticeGeometry,
    compute_orbits,
    expand_kernel,
    origin_orbit,
    translation_table,
)
from utils.errors import IntegrationError, ValidationError
from utils.rng import OMEGA_STREAM, Stream

logger = logging.getLogger(__name__)


@dataclass
class FlowResult:
    output: torch.Tensor
    delta_logdet: torch.Tensor   # ∫ ∇·g dt along the trajectory, per batch element
    steps: int


# =====================================================
# MODEL
# =====================================================
class EquivariantCNF(FlowModel):
    kind = "cnf"

    def __init__(
        self,
        geo: LatticeGeometry,
        variant: str = config.FULL_EQUIVARIANT,
        kernel: TimeKernelSpec = TimeKernelSpec(),
        frequencies: int = 9,
        rk4_steps: int = 50,
        conv_backend: str = "auto",
        omega_seed: int = 0,
        freeze_omega: bool = False,
    ):
        super().__init__(geo)
        if variant not in config.VARIANTS:
            raise ValidationError(f"Unknown CNF variant {variant!r}")
        if geo.L < 2:
            raise ValidationError("The flow needs L >= 2")
        if rk4_steps < 1:
            raise ValidationError(f"rk4_steps must be >= 1, got {rk4_steps}")

        self.variant = variant
        self.kernel = kernel
        self.frequencies = frequencies
        self.rk4_steps = rk4_steps
        self.conv_backend = conv_backend
        self.omega_seed = omega_seed
        self.table = compute_orbits(geo) if uses_orbits(variant) else translation_table(geo)

        n_spatial = self.table.orbit_count
        dtype = torch.float64
        self.W_sin = nn.Parameter(torch.zeros(n_spatial, kernel.A, frequencies, dtype=dtype))
        if not keeps_sign_flip(variant):
            self.W_cos = nn.Parameter(torch.zeros(n_spatial, kernel.A, frequencies, dtype=dtype))
            self.W_const = nn.Parameter(torch.zeros(n_spatial, kernel.A, dtype=dtype))
        else:
            self.W_cos = None
            self.W_const = None

        omega = Stream(omega_seed, OMEGA_STREAM).normal_tensor((frequencies,))
        self.omega = nn.Parameter(omega, requires_grad=not freeze_omega)

        self._origin = origin_orbit(self.table)

    def describe(self) -> dict:
        return {
            "kind": self.kind,
            "L": self.geo.L,
            "variant": self.variant,
            "time_dims": self.kernel.A,
            "horizon": self.kernel.T,
            "frequencies": self.frequencies,
            "rk4_steps": self.rk4_steps,
            "conv_backend": self.conv_backend,
            "omega_seed": self.omega_seed,
            "freeze_omega": not self.omega.requires_grad,
        }

    # -------------------------------------------------
    # vector field and divergence
    # -------------------------------------------------
    def _time_weights(self, t: float) -> torch.Tensor:
        return interpolation_kernel(t, self.kernel).to(self.W_sin.dtype)

    def _spatial_kernel(self, W: torch.Tensor, k: torch.Tensor) -> torch.Tensor:
        """Contract the time axis and expand orbits: (L, L, F) or (L, L)."""
        if W.dim() == 2:
            return expand_kernel(W @ k, self.table)
        return expand_kernel(torch.einsum("saf,a->sf", W, k), self.table)

    def _check_field(self, phi: torch.Tensor):
        if phi.dim() != 3 or tuple(phi.shape[-2:]) != (self.geo.L, self.geo.L):
            raise ValidationError(
                f"Expected a batch (B, {self.geo.L}, {self.geo.L}), got {tuple(phi.shape)}"
            )

    def velocity(self, phi: torch.Tensor, t: float) -> torch.Tensor:
        self._check_field(phi)
        k = self._time_weights(t)
        v = self._convolve(sine_features(phi, self.omega), self._spatial_kernel(self.W_sin, k))
        if self.W_cos is not None:
            v = v + self._convolve(
                cosine_features(phi, self.omega), self._spatial_kernel(self.W_cos, k)
            )
            v = v + self._spatial_kernel(self.W_const, k).sum()
        return v

    def divergence(self, phi: torch.Tensor, t: float) -> torch.Tensor:
        self._check_field(phi)
        k = self._time_weights(t)
        self_weights = torch.einsum("af,a->f", self.W_sin[self._origin], k)
        div = (sine_derivative(phi, self.omega).sum(dim=(-2, -1)) * self_weights).sum(-1)
        if self.W_cos is not None:
            self_cos = torch.einsum("af,a->f", self.W_cos[self._origin], k)
            div = div + (cosine_derivative(phi, self.omega).sum(dim=(-2, -1)) * self_cos).sum(-1)
        return div

    def _convolve(self, features: torch.Tensor, kernel: torch.Tensor) -> torch.Tensor:
        """out[b, x] = Σ_f Σ_d kernel[d, f] features[b, f, x + d] (periodic)."""
        backend = self.conv_backend
        if backend == "auto":
            backend = "fft" if self.geo.L > config.FFT_MIN_L else "direct"
        if backend == "direct":
            return _circular_conv_direct(features, kernel)
        if backend == "fft":
            return _circular_conv_fft(features, kernel)
        if backend == "dense":
            return _circular_conv_dense(features, kernel)
        raise ValidationError(f"Unknown convolution backend {backend!r}")

    # -------------------------------------------------
    # augmented RK4 integration
    # -------------------------------------------------
    def _integrate(self, phi: torch.Tensor, t_start: float, t_end: float, steps: int) -> FlowResult:
        self._check_field(phi)
        if steps < 1:
            raise ValidationError(f"steps must be >= 1, got {steps}")

        span = t_end - t_start
        h = span / steps
        ell = torch.zeros(phi.shape[0], dtype=phi.dtype, device=phi.device)

        for i in range(steps):
            ta = t_start + span * i / steps
            tb = t_start + span * (i + 1) / steps
            tm = 0.5 * (ta + tb)

            k1, d1 = self.velocity(phi, ta), self.divergence(phi, ta)
            p2 = phi + 0.5 * h * k1
            k2, d2 = self.velocity(p2, tm), self.divergence(p2, tm)
            p3 = phi + 0.5 * h * k2
            k3, d3 = self.velocity(p3, tm), self.divergence(p3, tm)
            p4 = phi + h * k3
            k4, d4 = self.velocity(p4, tb), self.divergence(p4, tb)

            phi = phi + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            ell = ell + (h / 6.0) * (d1 + 2.0 * d2 + 2.0 * d3 + d4)

            if not (torch.isfinite(phi).all() and torch.isfinite(ell).all()):
                raise IntegrationError("Non-finite state during RK4 integration", step=i)

        return FlowResult(phi, ell, steps)

    def integrate_forward(self, z: torch.Tensor, steps: int | None = None) -> FlowResult:
        return self._integrate(z, 0.0, self.kernel.T, steps or self.rk4_steps)

    def integrate_inverse(self, phi: torch.Tensor, steps: int | None = None) -> FlowResult:
        """Backward RK4 of the same field; delta_logdet accumulates −∫ ∇·g dt."""
        return self._integrate(phi, self.kernel.T, 0.0, steps or self.rk4_steps)

    def forward(self, z: torch.Tensor):
        result = self.integrate_forward(z)
        return result.output, result.delta_logdet

    def inverse(self, phi: torch.Tensor):
        result = self.integrate_inverse(phi)
        return result.output, result.delta_logdet


# =====================================================
# MODULE-LEVEL OPERATIONS
# =====================================================
def vector_field(phi: torch.Tensor, t: float, model: EquivariantCNF) -> torch.Tensor:
    return model.velocity(phi, t)


def divergence(phi: torch.Tensor, t: float, model: EquivariantCNF) -> torch.Tensor:
    return model.divergence(phi, t)


def log_q(z: torch.Tensor, result: FlowResult, prior=prior_log_density) -> torch.Tensor:
    """log q(φ) = log r(z) − Δlogdet for φ = integrate_forward(z).output."""
    return prior(z) - result.delta_logdet


def dense_weight_matrix(kernel: torch.Tensor) -> torch.Tensor:
    """Explicit W[x, y] = kernel[(y − x) mod L] for a (L, L) kernel; shape (D, D)."""
    L = kernel.shape[0]
    x1, x2 = torch.meshgrid(torch.arange(L), torch.arange(L), indexing="ij")
    x1, x2 = x1.reshape(-1), x2.reshape(-1)
    d1 = (x1.view(1, -1) - x1.view(-1, 1)) % L
    d2 = (x2.view(1, -1) - x2.view(-1, 1)) % L
    return kernel[d1, d2]


# =====================================================
# CIRCULAR CONVOLUTION BACKENDS
# =====================================================
def _circular_conv_direct(features: torch.Tensor, kernel: torch.Tensor) -> torch.Tensor:
    L = features.shape[-1]
    # tiling twice covers every x + d for x, d in 0..L-1
    tiled = features.repeat(1, 1, 2, 2)[..., : 2 * L - 1, : 2 * L - 1]
    weight = kernel.permute(2, 0, 1).unsqueeze(0)   # (1, F, L, L)
    return F.conv2d(tiled, weight).squeeze(1)


def _circular_conv_fft(features: torch.Tensor, kernel: torch.Tensor) -> torch.Tensor:
    L = features.shape[-1]
    kernel_hat = torch.fft.rfft2(kernel.permute(2, 0, 1))
    features_hat = torch.fft.rfft2(features)
    return torch.fft.irfft2((kernel_hat.conj() * features_hat).sum(dim=1), s=(L, L))


def _circular_conv_dense(features: torch.Tensor, kernel: torch.Tensor) -> torch.Tensor:
    B, n_freq, L, _ = features.shape
    out = torch.zeros(B, L * L, dtype=features.dtype, device=features.device)
    flat = features.reshape(B, n_freq, L * L)
    for f in range(n_freq):
        out = out + flat[:, f] @ dense_weight_matrix(kernel[..., f]).T
    return out.reshape(B, L, L)
