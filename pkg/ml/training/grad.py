"""
Reverse-mode gradients of flow losses.

RULES:
- Loss programs are plain callables inputs -> scalar tensor
- Gradients are exact for the discretized computation (RK4 steps unrolled)
- A non-finite gradient is traced back to the primitive that produced it
"""

import logging
import re
from dataclasses import dataclass, field

import torch
from torch import nn

from utils.errors import NonFiniteGradientError, ValidationError

logger = logging.getLogger(__name__)

_ANOMALY_PATTERN = re.compile(r"Function '(\w+)' returned nan")


@dataclass
class ParameterSet:
    tensors: dict = field(default_factory=dict)

    @classmethod
    def from_module(cls, module: nn.Module, trainable_only: bool = True) -> "ParameterSet":
        return cls({
            name: p
            for name, p in module.named_parameters()
            if p.requires_grad or not trainable_only
        })

    @property
    def names(self) -> list[str]:
        return list(self.tensors)

    @property
    def shapes(self) -> dict:
        return {name: tuple(t.shape) for name, t in self.tensors.items()}

    def count(self) -> int:
        return sum(t.numel() for t in self.tensors.values())

    def items(self):
        return self.tensors.items()

    def __len__(self):
        return len(self.tensors)


@dataclass
class GradientRecord:
    loss: float
    grads: dict

    def check_shapes(self, params: ParameterSet):
        for name, p in params.items():
            g = self.grads.get(name)
            if g is None or tuple(g.shape) != tuple(p.shape):
                raise ValidationError(f"Gradient for '{name}' missing or mis-shaped")


def value_and_grad(loss_program, params: ParameterSet, inputs) -> tuple[float, GradientRecord]:
    names = params.names
    tensors = [params.tensors[n] for n in names]

    loss = loss_program(inputs)
    if loss.dim() != 0:
        raise ValidationError(f"Loss program must return a scalar, got shape {tuple(loss.shape)}")
    if not torch.isfinite(loss):
        raise NonFiniteGradientError("Loss is not finite", primitive="loss")

    if not tensors:
        return float(loss.detach()), GradientRecord(float(loss.detach()), {})

    grads = torch.autograd.grad(loss, tensors, allow_unused=True)
    grads = {
        n: (torch.zeros_like(t) if g is None else g)
        for n, t, g in zip(names, tensors, grads)
    }

    bad = [n for n, g in grads.items() if not torch.isfinite(g).all()]
    if bad:
        primitive = _locate_non_finite(loss_program, tensors, inputs)
        raise NonFiniteGradientError(
            f"Non-finite gradient for {', '.join(bad)}", primitive=primitive
        )

    value = float(loss.detach())
    return value, GradientRecord(value, grads)


def _locate_non_finite(loss_program, tensors, inputs) -> str | None:
    """Replays the pass under anomaly detection to name the failing backward op."""
    try:
        with torch.autograd.detect_anomaly(check_nan=True):
            loss = loss_program(inputs)
            torch.autograd.grad(loss, tensors, allow_unused=True)
    except RuntimeError as e:
        match = _ANOMALY_PATTERN.search(str(e))
        return match.group(1) if match else str(e).splitlines()[0]
    return None
