import logging
import os

from physics.observables import JACKKNIFE_BLOCKS, measure, thin
from physics.phi4 import free_theory_chi2
from physics.lattice import LatticeGeometry
from services.artifacts import write_json
from utils.errors import ValidationError
from utils.store import read_store

logger = logging.getLogger(__name__)

MEASUREMENT_FILE = "measurement.json"


def cmd_measure(store_path, burn_in: int = 0, every: int = 1,
                n_blocks: int = JACKKNIFE_BLOCKS, out=None) -> dict:
    arrays, meta = read_store(store_path)
    if "samples" not in arrays:
        raise ValidationError(f"{store_path} holds no 'samples' array")

    samples = thin(arrays["samples"], burn_in, every)
    report = measure(samples, n_blocks)
    report.update({"source": str(store_path), "burn_in": burn_in, "thin": every})

    lam, m_sq = meta.get("lam"), meta.get("m_sq")
    if lam == 0 and m_sq is not None and m_sq > 0:
        exact = free_theory_chi2(m_sq, LatticeGeometry(report["L"]))
        report["chi2_exact"] = exact
        if report["chi2_err"] > 0:
            report["chi2_pull"] = (report["chi2"] - exact) / report["chi2_err"]

    logger.info(
        "χ₂ = %.4f ± %.4f from %d samples", report["chi2"], report["chi2_err"], report["n_samples"]
    )
    if report.get("m_p_L") is not None:
        logger.info("m_p·L = %.3f", report["m_p_L"])

    out = out or os.path.join(os.path.dirname(os.path.abspath(store_path)), MEASUREMENT_FILE)
    write_json(out, report)
    return report
