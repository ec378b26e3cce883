"""Adam with bias correction, and the step-indexed learning-rate drop."""

from dataclasses import dataclass, field

import torch

from ml.training.grad import GradientRecord, ParameterSet
from utils.errors import ValidationError


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def init_adam_state(params: ParameterSet, beta1=0.9, beta2=0.999, eps=1e-8) -> AdamState:
    return AdamState(
        beta1=beta1,
        beta2=beta2,
        eps=eps,
        m={n: torch.zeros_like(t, memory_format=torch.preserve_format).detach() for n, t in params.items()},
        v={n: torch.zeros_like(t, memory_format=torch.preserve_format).detach() for n, t in params.items()},
    )


@torch.no_grad()
def adam_step(params: ParameterSet, grads: GradientRecord, state: AdamState, lr: float):
    """Updates params and moments in place; returns (params, state)."""
    for name, p in params.items():
        if name not in state.m or state.m[name].shape != p.shape:
            raise ValidationError(f"Adam state does not match parameter '{name}'")
    grads.check_shapes(params)

    state.step += 1
    bc1 = 1.0 - state.beta1 ** state.step
    bc2 = 1.0 - state.beta2 ** state.step

    for name, p in params.items():
        g = grads.grads[name]
        m = state.m[name]
        v = state.v[name]
        m.mul_(state.beta1).add_(g, alpha=1.0 - state.beta1)
        v.mul_(state.beta2).addcmul_(g, g, value=1.0 - state.beta2)
        denom = (v / bc2).sqrt_().add_(state.eps)
        p.sub_(lr * (m / bc1) / denom)

    return params, state


def lr_schedule(step: int, lr: float = 1e-3, drop_step: int = 250, factor: float = 0.1) -> float:
    return lr if step < drop_step else lr * factor


# -------------------------------------------------
# checkpoint support
# -------------------------------------------------
def adam_state_arrays(state: AdamState) -> dict:
    arrays = {}
    for name in state.m:
        arrays[f"adam.m.{name}"] = state.m[name].detach().cpu().numpy()
        arrays[f"adam.v.{name}"] = state.v[name].detach().cpu().numpy()
    return arrays


def adam_state_meta(state: AdamState) -> dict:
    return {"beta1": state.beta1, "beta2": state.beta2, "eps": state.eps, "step": state.step}


def restore_adam_state(params: ParameterSet, arrays: dict, meta: dict) -> AdamState:
    state = init_adam_state(params, meta["beta1"], meta["beta2"], meta["eps"])
    state.step = int(meta["step"])
    for name, p in params.items():
        for moment, store in (("m", state.m), ("v", state.v)):
            key = f"adam.{moment}.{name}"
            if key not in arrays:
                raise ValidationError(f"Checkpoint lacks optimizer moment '{key}'")
            store[name] = torch.as_tensor(arrays[key], dtype=p.dtype).reshape(p.shape).clone()
    return state
