"""
Reproducible random streams.

RULES:
- One counter-based Philox generator per purpose, keyed by (master seed, offset)
- Offsets are fixed below; never reorder them
- Gaussian variates via Box–Muller on the stream's own uniforms
"""

import math

import numpy as np
import torch


# =====================================================
# STREAM OFFSETS (LOCKED)
# =====================================================
PRIOR_STREAM = 0
OMEGA_STREAM = 1
MH_STREAM = 2
INIT_STREAM = 3
EVAL_STREAM = 4
AUDIT_STREAM = 5

_MASK64 = (1 << 64) - 1


class Stream:
    """A Philox stream; state is JSON-serializable for checkpoints."""

    def __init__(self, seed: int, offset: int):
        self.seed = int(seed)
        self.offset = int(offset)
        key = (self.offset << 64) | (self.seed & _MASK64)
        self._bitgen = np.random.Philox(key=key)
        self.generator = np.random.Generator(self._bitgen)

    def uniform(self, size) -> np.ndarray:
        """Uniform draws on [0, 1)."""
        return self.generator.random(size)

    def normal(self, shape) -> np.ndarray:
        """Box–Muller, cosine branch: two uniforms per variate, so draws do not
        depend on how a sequence is split into calls."""
        shape = (shape,) if isinstance(shape, int) else tuple(shape)
        n = int(np.prod(shape))
        u = self.generator.random((n, 2))
        radius = np.sqrt(-2.0 * np.log(1.0 - u[:, 0]))  # 1 - u in (0, 1]
        return (radius * np.cos(2.0 * math.pi * u[:, 1])).reshape(shape)

    def normal_tensor(self, shape, dtype=torch.float64) -> torch.Tensor:
        return torch.from_numpy(self.normal(tuple(shape))).to(dtype)

    # -------------------------------------------------
    # checkpoint support
    # -------------------------------------------------
    def get_state(self) -> dict:
        return _to_jsonable(self._bitgen.state)

    def set_state(self, state: dict) -> None:
        restored = dict(state)
        inner = dict(restored["state"])
        inner["counter"] = np.array(inner["counter"], dtype=np.uint64)
        inner["key"] = np.array(inner["key"], dtype=np.uint64)
        restored["state"] = inner
        restored["buffer"] = np.array(restored["buffer"], dtype=np.uint64)
        self._bitgen.state = restored


def _to_jsonable(value):
    if isinstance(value, dict):
        return {k: _to_jsonable(v) for k, v in value.items()}
    if isinstance(value, np.ndarray):
        return [int(v) for v in value.tolist()]
    if isinstance(value, np.integer):
        return int(value)
    return value


def streams(seed: int) -> dict:
    return {
        "prior": Stream(seed, PRIOR_STREAM),
        "omega": Stream(seed, OMEGA_STREAM),
        "mh": Stream(seed, MH_STREAM),
        "init": Stream(seed, INIT_STREAM),
        "eval": Stream(seed, EVAL_STREAM),
        "audit": Stream(seed, AUDIT_STREAM),
    }
