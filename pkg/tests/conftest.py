"""
Shared fixtures: seeded RNGs, small grids, a tiny network configuration and
session-wide datasets / trained models so the expensive pieces are built once.
"""
from adapters.dataset_adapter import DatasetAdapter
from adapters.families.burgers import BurgersFamily
from adapters.families.constant_coeff import ConstantCoeffFamily
from adapters.families.signal import GridSpec
from datagen.generate import generate_dataset
from models.networks import NetworkConfig
from models.training import TrainConfig, train
import numpy as np
import pytest

GRID_1D = GridSpec(dx=(0.5,), n_x=(8,), dt=0.05, n_t=20)
GRID_2D = GridSpec(dx=(0.01, 0.01), n_x=(8, 8), dt=0.01, n_t=10, origin=(-0.04, -0.04), periodic=True)
TINY_NETWORK = dict(
    d_z=4,
    ae_width=8,
    ae_hidden=1,
    estimator_width=8,
    estimator_hidden=1,
    head_width=4,
    head_hidden=1,
    conv_channels=(2, 2),
)


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow end-to-end tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def grid_1d():
    return GRID_1D


@pytest.fixture
def grid_2d():
    return GRID_2D


@pytest.fixture
def tiny_network():
    return NetworkConfig(**TINY_NETWORK)


@pytest.fixture
def tiny_train_config():
    return TrainConfig(epochs=2, patience=2, batch_size=8, seed=0, network=NetworkConfig(**TINY_NETWORK))


@pytest.fixture(scope="session")
def constant_dataset(tmp_path_factory):
    """20 ConstantCoeff signals on the small 1-D grid (16/2/2 split)."""
    path = tmp_path_factory.mktemp("data") / "constant"
    generate_dataset(ConstantCoeffFamily(), 20, 7, path, grid=GRID_1D, progress=False)
    return path


@pytest.fixture(scope="session")
def burgers_dataset(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "burgers"
    generate_dataset(BurgersFamily(), 10, 3, path, grid=GRID_1D, progress=False)
    return path


@pytest.fixture(scope="session")
def trained_constant(tmp_path_factory, constant_dataset):
    """Model directory of a CONFIDE model trained for two epochs on `constant_dataset`."""
    out = tmp_path_factory.mktemp("runs") / "constant"
    config = TrainConfig(epochs=2, patience=2, batch_size=8, seed=0, network=NetworkConfig(**TINY_NETWORK))
    train(DatasetAdapter(constant_dataset), config, out_dir=out, progress=False)
    return out
