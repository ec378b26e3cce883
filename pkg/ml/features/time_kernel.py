"""Linear (hat-function) interpolation kernel over the integration horizon."""

from dataclasses import dataclass

import torch

from utils.errors import ValidationError

# tolerance for RK4 stage times that land a rounding error past [0, T]
_T_SLACK = 1e-12


@dataclass(frozen=True)
class TimeKernelSpec:
    A: int = 10
    T: float = 1.0

    def __post_init__(self):
        if self.A < 2:
            raise ValidationError(f"Time kernel needs A >= 2 nodes, got {self.A}")
        if not self.T > 0:
            raise ValidationError(f"Integration horizon must be > 0, got {self.T}")

    @property
    def nodes(self) -> torch.Tensor:
        return torch.arange(self.A, dtype=torch.float64) * (self.T / (self.A - 1))


def interpolation_kernel(t: float, spec: TimeKernelSpec) -> torch.Tensor:
    """K_a(t) = max(0, 1 − |t − t_a|·(A−1)/T); a partition of unity on [0, T]."""
    t = float(t)
    if t < -_T_SLACK * spec.T or t > spec.T * (1.0 + _T_SLACK):
        raise ValidationError(f"t={t} outside the horizon [0, {spec.T}]")
    t = min(max(t, 0.0), spec.T)

    width = spec.T / (spec.A - 1)
    return torch.clamp(1.0 - (t - spec.nodes).abs() / width, min=0.0)
