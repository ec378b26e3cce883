"""
Model construction and checkpoint I/O.

RULES:
- Checkpoints are LFLOW1 stores: parameters + optimizer moments as arrays,
  architecture / config / progress / RNG states in the JSON meta
- A checkpoint whose schema version or parameter layout differs is rejected
- Loading never trains; it only rebuilds the module and copies weights in
"""

import logging
from pathlib import Path

import numpy as np
import torch

import config
from ml.features.schema import SCHEMA_VERSION, cnf_parameter_names
from ml.features.time_kernel import TimeKernelSpec
from ml.models.base import FlowModel
from ml.models.cnf import EquivariantCNF
from ml.models.realnvp import CouplingStack
from physics.lattice import LatticeGeometry
from utils.errors import ValidationError
from utils.store import read_store, write_store

logger = logging.getLogger(__name__)


# =====================================================
# MODEL FACTORY
# =====================================================
def build_model(cfg: config.RunConfig) -> FlowModel:
    geo = LatticeGeometry(cfg.lattice.L)
    seed = cfg.run.seed

    if cfg.run.model == "cnf":
        return EquivariantCNF(
            geo,
            variant=cfg.run.variant,
            kernel=TimeKernelSpec(cfg.cnf.time_dims, cfg.cnf.horizon),
            frequencies=cfg.cnf.frequencies,
            rk4_steps=cfg.cnf.rk4_steps,
            conv_backend=cfg.cnf.conv_backend,
            omega_seed=seed,
            freeze_omega=cfg.cnf.freeze_omega,
        )

    if cfg.run.model == "realnvp":
        return CouplingStack(
            geo,
            n_layers=cfg.realnvp.n_layers,
            hidden_channels=cfg.realnvp.hidden_channels,
            kernel_size=cfg.realnvp.kernel_size,
            negative_slope=cfg.realnvp.negative_slope,
            init_scale=cfg.realnvp.init_scale,
            init_seed=seed,
        )

    raise ValidationError(f"Unknown model kind {cfg.run.model!r}")


def model_from_description(desc: dict) -> FlowModel:
    """Inverse of FlowModel.describe()."""
    geo = LatticeGeometry(int(desc["L"]))

    if desc["kind"] == "cnf":
        return EquivariantCNF(
            geo,
            variant=desc["variant"],
            kernel=TimeKernelSpec(int(desc["time_dims"]), float(desc["horizon"])),
            frequencies=int(desc["frequencies"]),
            rk4_steps=int(desc["rk4_steps"]),
            conv_backend=desc["conv_backend"],
            omega_seed=int(desc["omega_seed"]),
            freeze_omega=bool(desc["freeze_omega"]),
        )

    if desc["kind"] == "realnvp":
        return CouplingStack(
            geo,
            n_layers=int(desc["n_layers"]),
            hidden_channels=desc["hidden_channels"],
            kernel_size=int(desc["kernel_size"]),
            negative_slope=float(desc["negative_slope"]),
            init_scale=float(desc["init_scale"]),
            init_seed=int(desc["init_seed"]),
        )

    raise ValidationError(f"Unknown model kind {desc.get('kind')!r}")


# =====================================================
# CHECKPOINTS
# =====================================================
def save_checkpoint(path, model: FlowModel, extra_arrays: dict | None = None,
                    meta: dict | None = None) -> Path:
    arrays = {
        f"param.{name}": p.detach().cpu().numpy()
        for name, p in model.named_parameters()
    }
    arrays.update(extra_arrays or {})

    header = {
        "schema_version": SCHEMA_VERSION,
        "code_version": config.VERSION,
        "model": model.describe(),
        "parameters": [name for name, _ in model.named_parameters()],
    }
    header.update(meta or {})

    path = write_store(path, arrays, header)
    logger.debug("Checkpoint written to %s", path)
    return path


def load_checkpoint(path) -> tuple[FlowModel, dict, dict]:
    """Returns (model, arrays, meta)."""
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"Checkpoint not found: {path}")

    arrays, meta = read_store(path)

    if meta.get("schema_version") != SCHEMA_VERSION:
        raise ValidationError(
            f"{path}: schema {meta.get('schema_version')} != {SCHEMA_VERSION}; retrain required"
        )

    model = model_from_description(meta["model"])
    expected = [name for name, _ in model.named_parameters()]
    if meta.get("parameters") != expected:
        raise ValidationError(f"{path}: parameter layout does not match the model")
    if isinstance(model, EquivariantCNF):
        declared = cnf_parameter_names(model.variant)
        if sorted(declared) != sorted(expected):
            raise ValidationError(f"{path}: unexpected CNF parameters {expected}")

    load_parameters(model, arrays)
    return model, arrays, meta


@torch.no_grad()
def load_parameters(model: FlowModel, arrays: dict) -> FlowModel:
    for name, p in model.named_parameters():
        key = f"param.{name}"
        if key not in arrays:
            raise ValidationError(f"Checkpoint lacks parameter '{name}'")
        value = np.asarray(arrays[key])
        if tuple(value.shape) != tuple(p.shape):
            raise ValidationError(
                f"Parameter '{name}' has shape {value.shape}, model expects {tuple(p.shape)}"
            )
        p.copy_(torch.as_tensor(value, dtype=p.dtype))
    return model
