import pytest
import torch

import config
from physics.lattice import LatticeGeometry
from utils.rng import Stream


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run budgeted end-to-end tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(autouse=True)
def _float64():
    previous = torch.get_default_dtype()
    torch.set_default_dtype(torch.float64)
    yield
    torch.set_default_dtype(previous)


@pytest.fixture
def geo4():
    return LatticeGeometry(4)


@pytest.fixture
def geo6():
    return LatticeGeometry(6)


@pytest.fixture
def stream():
    return Stream(1234, 7)


@pytest.fixture
def tiny_config(tmp_path):
    """A run small enough to train in seconds."""
    cfg = config.RunConfig()
    cfg = cfg.replace("run", output_dir=str(tmp_path / "run"))
    cfg = cfg.replace("lattice", L=2)
    cfg = cfg.replace("couplings", m_sq=1.0, lam=0.0)
    cfg = cfg.replace(
        "train", batch_size=8, steps_per_epoch=2, epochs=3, ess_samples=16, checkpoint_every=2
    )
    cfg = cfg.replace("cnf", rk4_steps=3)
    cfg = cfg.replace("realnvp", n_layers=2)
    cfg = cfg.replace("sampler", chain_length=40, chunk_size=10)
    return config.validate_config(cfg)
