"""
lattice-flow command-line entry point.

    python app.py train --config configs/l6.toml
    python app.py sample --checkpoint runs/l6/checkpoints/best.lflow --steps 10000
    python app.py measure runs/l6/chain/samples.lflow
    python app.py check-equivariance --checkpoint runs/l6/checkpoints/best.lflow
    python app.py ablate --config configs/l6.toml --budget-epochs 50
    python app.py compare --config configs/l6.toml --budget-epochs 50 --chain-steps 2000
    python app.py free-check --L 6 --m-sq 1.0

EXIT CODES (LOCKED): 0 ok, 2 config error, 3 numeric failure, 4 acceptance-check failure
"""

# =====================================================
# IMPORTS
# =====================================================
import argparse
import logging
import os
import sys

import config
from utils.errors import AcceptanceError, LatticeFlowError

logger = logging.getLogger("lflow")

LOG_FORMAT = "[lflow] %(levelname)s %(name)s: %(message)s"


# =====================================================
# CONFIG ASSEMBLY (file < env seed < flags)
# =====================================================
def build_config(args) -> config.RunConfig:
    cfg = config.load_config(args.config) if args.config else config.RunConfig()
    cfg = config.apply_seed_override(cfg)

    run_changes = {
        "model": getattr(args, "model", None),
        "variant": getattr(args, "variant", None),
        "seed": getattr(args, "seed", None),
        "output_dir": getattr(args, "out", None),
        "workers": getattr(args, "workers", None),
    }
    run_changes = {k: v for k, v in run_changes.items() if v is not None}
    if run_changes:
        cfg = cfg.replace("run", **run_changes)

    if getattr(args, "L", None) is not None:
        cfg = cfg.replace("lattice", L=args.L)

    coupling_changes = {
        k: v for k, v in (("m_sq", getattr(args, "m_sq", None)), ("lam", getattr(args, "lam", None)))
        if v is not None
    }
    if coupling_changes:
        cfg = cfg.replace("couplings", **coupling_changes)

    if getattr(args, "epochs", None) is not None:
        cfg = cfg.replace("train", epochs=args.epochs)
    if getattr(args, "chain_length", None) is not None:
        cfg = cfg.replace("sampler", chain_length=args.chain_length)

    return config.validate_config(cfg)


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    return config.apply_seed_override(config.RunConfig()).run.seed


# =====================================================
# COMMANDS
# =====================================================
def run_train(args) -> int:
    from services.train import cmd_train

    cmd_train(build_config(args), resume=args.resume)
    return config.EXIT_OK


def run_sample(args) -> int:
    from services.sample import cmd_sample

    out = args.out or os.path.normpath(os.path.join(os.path.dirname(os.path.abspath(args.checkpoint)), "..", "chain"))
    record = cmd_sample(args.checkpoint, args.steps, _seed(args), out, args.chunk_size, args.progress)
    print(f"acceptance {record.acceptance_rate:.4f} over {len(record)} steps")
    return config.EXIT_OK


def run_measure(args) -> int:
    from services.measure import cmd_measure

    report = cmd_measure(args.store, args.burn_in, args.thin, args.blocks, args.out)
    print(f"chi2 {report['chi2']:.6f} +/- {report['chi2_err']:.6f}")
    return config.EXIT_OK


def run_check_equivariance(args) -> int:
    from services.audit import cmd_check_equivariance

    out = args.out or os.path.normpath(os.path.join(os.path.dirname(os.path.abspath(args.checkpoint)), "..", "audit"))
    gate = cmd_check_equivariance(args.checkpoint, args.samples, _seed(args), out, args.tolerance)
    if not gate["allowed"]:
        raise AcceptanceError(gate["block_reason"])
    return config.EXIT_OK


def run_ablate(args) -> int:
    from services.ablate import cmd_ablate

    seeds = tuple(args.seeds) if args.seeds else (0, 1, 2)
    gate = cmd_ablate(build_config(args), seeds, args.budget_epochs)
    if not gate["allowed"]:
        raise AcceptanceError(gate["block_reason"])
    return config.EXIT_OK


def run_compare(args) -> int:
    from services.compare import cmd_compare

    report = cmd_compare(build_config(args), args.budget_epochs, args.chain_steps)
    for model, row in report.items():
        print(f"{model}: ess {row['ess']:.4f} acceptance {row['acceptance']:.4f} after {row['elapsed_seconds']:.1f}s")
    return config.EXIT_OK


def run_free_check(args) -> int:
    from services.free_check import cmd_free_check

    cfg = build_config(args)
    gate = cmd_free_check(cfg, cfg.lattice.L, cfg.couplings.m_sq)
    if not gate["allowed"]:
        raise AcceptanceError(gate["block_reason"])
    return config.EXIT_OK


# =====================================================
# PARSER
# =====================================================
def _run_flags(p, model_flags: bool = True):
    p.add_argument("--config", help="TOML run config")
    p.add_argument("--seed", type=int, help=f"master seed (overrides file and {config.SEED_ENV_VAR})")
    p.add_argument("--out", help="output directory")
    p.add_argument("--workers", type=int, help="worker threads / processes")
    p.add_argument("--L", type=int, help="lattice extent")
    p.add_argument("--m-sq", dest="m_sq", type=float, help="bare mass squared")
    p.add_argument("--lam", type=float, help="quartic coupling")
    p.add_argument("--epochs", type=int, help="training epochs")
    if model_flags:
        p.add_argument("--model", choices=config.MODEL_KINDS)
        p.add_argument("--variant", choices=config.VARIANTS)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog=config.APP_NAME, description="Flow samplers for 2-D lattice φ⁴")
    parser.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    parser.add_argument("--version", action="version", version=f"%(prog)s {config.VERSION}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="reverse-KL training")
    _run_flags(p)
    p.add_argument("--resume", help="checkpoint to resume from")
    p.set_defaults(handler=run_train)

    p = sub.add_parser("sample", help="flow-proposal Metropolis-Hastings chain")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--steps", type=int, default=config.SamplerSection().chain_length)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--chunk-size", type=int, default=config.SamplerSection().chunk_size)
    p.add_argument("--progress", action="store_true")
    p.set_defaults(handler=run_sample)

    p = sub.add_parser("measure", help="χ₂ and pole mass from a sample store")
    p.add_argument("store")
    p.add_argument("--burn-in", type=int, default=0)
    p.add_argument("--thin", type=int, default=1)
    p.add_argument("--blocks", type=int, default=50, help="jackknife blocks")
    p.add_argument("--out", help="report path (default: measurement.json beside the store)")
    p.set_defaults(handler=run_measure)

    p = sub.add_parser("check-equivariance", help="log q over all lattice symmetries")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--samples", type=int, default=6)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--tolerance", type=float, default=1e-6)
    p.set_defaults(handler=run_check_equivariance)

    p = sub.add_parser("ablate", help="four CNF variants × seeds")
    _run_flags(p, model_flags=False)
    p.add_argument("--budget-epochs", type=int, help="cap epochs per run")
    p.add_argument("--seeds", type=int, nargs="+")
    p.set_defaults(handler=run_ablate)

    p = sub.add_parser("compare", help="CNF vs realNVP: ESS and acceptance against wall-clock")
    _run_flags(p, model_flags=False)
    p.add_argument("--variant", choices=config.VARIANTS)
    p.add_argument("--budget-epochs", type=int, help="cap epochs per model")
    p.add_argument("--chain-steps", type=int, help="MH steps per checkpoint")
    p.set_defaults(handler=run_compare)

    p = sub.add_parser("free-check", help="λ = 0 end-to-end check against 1/(2m²)")
    _run_flags(p)
    p.add_argument("--chain-length", type=int)
    p.set_defaults(handler=run_free_check, L=6, m_sq=1.0)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level), format=LOG_FORMAT)

    try:
        return args.handler(args)
    except LatticeFlowError as e:
        logger.error("%s: %s", type(e).__name__, e)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
