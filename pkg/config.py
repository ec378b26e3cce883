# =====================================================
# CONFIG — SINGLE SOURCE OF TRUTH
# =====================================================
import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

import tomli_w


# =====================================================
# APP SETTINGS
# =====================================================
APP_NAME = "lattice-flow"
VERSION = "0.3.0"

SEED_ENV_VAR = "LFLOW_SEED"

EXIT_OK = 0
EXIT_CONFIG_ERROR = 2
EXIT_NUMERIC_FAILURE = 3
EXIT_ACCEPTANCE_FAILURE = 4


# =====================================================
# MODEL KINDS & CNF VARIANTS
# =====================================================
MODEL_KINDS = ("cnf", "realnvp")

FULL_EQUIVARIANT = "full_equivariant"
TRANSLATION_ONLY = "translation_only"
NO_SIGN_FLIP = "no_sign_flip"
NEITHER = "neither"

VARIANTS = (FULL_EQUIVARIANT, TRANSLATION_ONLY, NO_SIGN_FLIP, NEITHER)

CONV_BACKENDS = ("direct", "fft", "auto")
# auto switches to the FFT path above this side length
FFT_MIN_L = 12


# =====================================================
# PUBLISHED COUPLINGS (m² = -4, λ tuned for L/ξ ≈ 4)
# =====================================================
PUBLISHED_COUPLINGS = {
    6: {"m_sq": -4.0, "lam": 6.975, "chi2": 1.06, "l_over_xi": 3.98},
    12: {"m_sq": -4.0, "lam": 5.276, "chi2": 4.12, "l_over_xi": 3.99},
    20: {"m_sq": -4.0, "lam": 5.113, "chi2": 10.57, "l_over_xi": 4.05},
    32: {"m_sq": -4.0, "lam": 4.750, "chi2": 25.34, "l_over_xi": 4.05},
}


def published_couplings(L: int) -> dict:
    if L not in PUBLISHED_COUPLINGS:
        from utils.errors import ConfigError

        raise ConfigError(
            f"No published couplings for L={L}; choose one of {sorted(PUBLISHED_COUPLINGS)}"
        )
    return dict(PUBLISHED_COUPLINGS[L])


# =====================================================
# RUN CONFIG SECTIONS
# =====================================================
@dataclass
class RunSection:
    model: str = "cnf"
    variant: str = FULL_EQUIVARIANT
    seed: int = 0
    output_dir: str = "runs/default"
    workers: int = 1


@dataclass
class LatticeSection:
    L: int = 6


@dataclass
class CouplingSection:
    m_sq: float = -4.0
    lam: float = 6.975


@dataclass
class TrainConfig:
    batch_size: int = 100
    steps_per_epoch: int = 50
    epochs: int = 200
    lr: float = 1e-3
    lr_drop_step: int = 250
    lr_drop_factor: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    ess_samples: int = 1000
    checkpoint_every: int = 10
    rolling_window: int = 200
    # 0 means no wall-clock budget
    max_seconds: float = 0.0


@dataclass
class CnfSection:
    time_dims: int = 10
    frequencies: int = 9
    horizon: float = 1.0
    rk4_steps: int = 50
    conv_backend: str = "auto"
    freeze_omega: bool = False


@dataclass
class RealNvpSection:
    n_layers: int = 16
    hidden_channels: list = field(default_factory=lambda: [8, 8])
    kernel_size: int = 3
    negative_slope: float = 0.01
    init_scale: float = 1e-2


@dataclass
class SamplerSection:
    chain_length: int = 10_000
    chunk_size: int = 100
    burn_in: int = 0
    thin: int = 1


@dataclass
class RunConfig:
    run: RunSection = field(default_factory=RunSection)
    lattice: LatticeSection = field(default_factory=LatticeSection)
    couplings: CouplingSection = field(default_factory=CouplingSection)
    train: TrainConfig = field(default_factory=TrainConfig)
    cnf: CnfSection = field(default_factory=CnfSection)
    realnvp: RealNvpSection = field(default_factory=RealNvpSection)
    sampler: SamplerSection = field(default_factory=SamplerSection)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, section: str, **changes) -> "RunConfig":
        updated = dataclasses.replace(getattr(self, section), **changes)
        return dataclasses.replace(self, **{section: updated})


_SECTION_TYPES = {f.name: f.default_factory for f in dataclasses.fields(RunConfig)}


# =====================================================
# VALIDATION
# =====================================================
def validate_config(cfg: RunConfig) -> RunConfig:
    from utils.errors import ConfigError

    problems = []

    if cfg.run.model not in MODEL_KINDS:
        problems.append(f"run.model must be one of {MODEL_KINDS}")
    if cfg.run.variant not in VARIANTS:
        problems.append(f"run.variant must be one of {VARIANTS}")
    if cfg.run.workers < 1:
        problems.append("run.workers must be >= 1")
    if cfg.lattice.L < 2:
        problems.append("lattice.L must be >= 2")

    if cfg.couplings.lam < 0:
        problems.append("couplings.lam must be >= 0")
    elif cfg.couplings.lam == 0 and cfg.couplings.m_sq <= 0:
        problems.append("lam = 0 requires m_sq > 0 (density not normalizable)")

    positive = {
        "train.batch_size": cfg.train.batch_size,
        "train.steps_per_epoch": cfg.train.steps_per_epoch,
        "train.epochs": cfg.train.epochs,
        "train.lr": cfg.train.lr,
        "train.lr_drop_step": cfg.train.lr_drop_step,
        "train.lr_drop_factor": cfg.train.lr_drop_factor,
        "train.eps": cfg.train.eps,
        "train.ess_samples": cfg.train.ess_samples,
        "train.checkpoint_every": cfg.train.checkpoint_every,
        "train.rolling_window": cfg.train.rolling_window,
        "cnf.frequencies": cfg.cnf.frequencies,
        "cnf.horizon": cfg.cnf.horizon,
        "cnf.rk4_steps": cfg.cnf.rk4_steps,
        "realnvp.n_layers": cfg.realnvp.n_layers,
        "realnvp.kernel_size": cfg.realnvp.kernel_size,
        "sampler.chain_length": cfg.sampler.chain_length,
        "sampler.chunk_size": cfg.sampler.chunk_size,
        "sampler.thin": cfg.sampler.thin,
    }
    for name, value in positive.items():
        if not value > 0:
            problems.append(f"{name} must be > 0")

    if not 0 <= cfg.train.beta1 < 1 or not 0 <= cfg.train.beta2 < 1:
        problems.append("train.beta1/beta2 must lie in [0, 1)")
    if cfg.cnf.time_dims < 2:
        problems.append("cnf.time_dims must be >= 2")
    if cfg.cnf.conv_backend not in CONV_BACKENDS:
        problems.append(f"cnf.conv_backend must be one of {CONV_BACKENDS}")
    if cfg.realnvp.kernel_size % 2 != 1:
        problems.append("realnvp.kernel_size must be odd")
    if cfg.sampler.burn_in < 0 or cfg.train.max_seconds < 0:
        problems.append("sampler.burn_in and train.max_seconds must be >= 0")

    if problems:
        raise ConfigError("; ".join(problems))
    return cfg


# =====================================================
# TOML I/O
# =====================================================
def config_from_dict(data: dict) -> RunConfig:
    """Builds a RunConfig, rejecting unknown sections and keys."""
    from utils.errors import ConfigError

    sections = {}
    for name, values in data.items():
        if name not in _SECTION_TYPES:
            raise ConfigError(f"Unknown config section [{name}]")
        if not isinstance(values, dict):
            raise ConfigError(f"Section [{name}] must be a table")

        section_cls = type(_SECTION_TYPES[name]())
        known = {f.name for f in dataclasses.fields(section_cls)}
        unknown = sorted(set(values) - known)
        if unknown:
            raise ConfigError(f"Unknown keys in [{name}]: {', '.join(unknown)}")
        sections[name] = section_cls(**values)

    return validate_config(RunConfig(**sections))


def load_config(path) -> RunConfig:
    from utils.errors import ConfigError

    try:
        with open(path, "rb") as f:
            data = tomllib.load(f)
    except FileNotFoundError as e:
        raise ConfigError(f"Config file not found: {path}") from e
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"Malformed TOML in {path}: {e}") from e

    return config_from_dict(data)


def dump_config(cfg: RunConfig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        tomli_w.dump(cfg.to_dict(), f)
    return path


def apply_seed_override(cfg: RunConfig) -> RunConfig:
    raw = os.environ.get(SEED_ENV_VAR)
    if raw is None or raw == "":
        return cfg
    try:
        seed = int(raw)
    except ValueError as e:
        from utils.errors import ConfigError

        raise ConfigError(f"{SEED_ENV_VAR} must be an integer, got {raw!r}") from e
    return cfg.replace("run", seed=seed)
