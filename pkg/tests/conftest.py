import numpy as np
import pytest

from cltta import netcore as nc
from cltta.scenarios import make_source

RECIPE = dict(epochs=15, lr=3e-3, batch_size=64)


def trained_source(seed: int = 0):
    train, test = make_source(seed=seed)
    res = nc.train_source(nc.mlp_new([20, 64, 10], seed), train, seed=seed, test=test, **RECIPE)
    return res, train, test


@pytest.fixture(scope="session")
def source():
    """(TrainResult, train, test) for the default 10-class blobs, seed 0."""
    return trained_source(0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
