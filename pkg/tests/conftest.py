from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import pytest

from app import config as app_config
from app.crp import Concentration, CrpState
from app.database import dispose_engine
from app.network import StaticNetwork, load_edge_list
from app.random_source import RandomSource
from app.state import (
    ChainDraw,
    ChainMeta,
    ChainOutput,
    Hyperparameters,
    ModelKind,
    SamplerState,
)

REPO_DIR = Path(__file__).resolve().parent.parent
DATA_DIR = REPO_DIR / "data"
CONFIG_DIR = REPO_DIR / "configs"


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run long statistical checks")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long statistical check, needs --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(autouse=True)
def isolated_settings(tmp_path, monkeypatch):
    """Point the registry and default output dir at a temporary directory."""
    monkeypatch.setenv("APP_DATA_DIR", str(tmp_path / "registry"))
    monkeypatch.setenv("OUTPUT_DIR", str(tmp_path / "runs"))
    monkeypatch.setenv("LOG_LEVEL", "INFO")
    dispose_engine()
    app_config.reload_settings()
    yield
    dispose_engine()


@pytest.fixture
def rng():
    return RandomSource(seed=12345)


@pytest.fixture
def hyper():
    return Hyperparameters()


@pytest.fixture
def triangle():
    return StaticNetwork.from_pairs(3, [(1, 2), (2, 3), (1, 3)])


@pytest.fixture
def karate():
    return load_edge_list(DATA_DIR / "karate.txt")


def make_state(
    z: Sequence[int],
    beta: Sequence[float],
    c: Sequence[int],
    theta: Sequence[float],
    model: ModelKind = ModelKind.STATIC,
    T: int = 1,
    eta: float = 0.0,
    zeta: Optional[np.ndarray] = None,
    alpha: float = 1.0,
    nu: float = 1.0,
) -> SamplerState:
    """Hand-built sampler state with 0-based labels."""
    n = len(z)
    return SamplerState(
        model=model,
        n=n,
        T=T,
        zeta=np.zeros((T, n, n)) if zeta is None else np.array(zeta, dtype=float),
        z_state=CrpState.from_assignments(z, beta),
        c_state=CrpState.from_assignments(c, theta),
        alpha=Concentration(alpha, 5.0, 5.0),
        nu=Concentration(nu, 5.0, 5.0),
        eta=eta,
    )


def make_chain(z_rows, c_rows=None, stream: int = 0, **scalars) -> ChainOutput:
    """ChainOutput from label rows; cluster values are zero unless given via scalars."""
    z_rows = np.asarray(z_rows)
    c_rows = np.asarray(c_rows) if c_rows is not None else np.zeros_like(z_rows)
    meta = ChainMeta(seed=1, stream=stream, model=ModelKind.STATIC, iterations=len(z_rows), burn_in=0, thin=1)
    out = ChainOutput(meta=meta)
    for d, (z, c) in enumerate(zip(z_rows, c_rows)):
        K, L = int(z.max()) + 1, int(c.max()) + 1
        out.draws.append(ChainDraw(
            z=z,
            c=c,
            K=K,
            L=L,
            alpha=float(scalars.get("alpha", [1.0] * len(z_rows))[d]),
            nu=float(scalars.get("nu", [1.0] * len(z_rows))[d]),
            eta=float(scalars.get("eta", [0.0] * len(z_rows))[d]),
            beta_star=np.zeros(K),
            theta_star=np.zeros(L),
        ))
    return out
