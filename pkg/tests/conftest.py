import logging
import os

import numpy as np
import pytest

from dscca.config import ExperimentConfig
from dscca.data import make_splits, synth_correlated


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(autouse=True)
def isolated_environment(monkeypatch):
    """No DSCCA_* variables leak in, and CLI logging setup is undone afterwards."""
    for name in list(os.environ):
        if name.startswith("DSCCA_"):
            monkeypatch.delenv(name, raising=False)
    logger = logging.getLogger("dscca")
    handlers, level, propagate = list(logger.handlers), logger.level, logger.propagate
    yield
    logger.handlers = handlers
    logger.setLevel(level)
    logger.propagate = propagate


@pytest.fixture
def tiny_config():
    """A config that trains in well under a second per run."""
    config = ExperimentConfig.create_default()
    ds = config.dataset
    ds.n_samples = 300
    ds.latent_dim = 2
    ds.dims = [6, 5]
    ds.target_correlations = [0.9, 0.7]
    ds.split = [0.6, 0.2, 0.2]

    arch = config.architecture
    arch.hidden1 = [8]
    arch.hidden2 = [8]
    arch.output_dim = 4
    arch.scaler_hidden = [8]

    t = config.training
    t.epochs = 3
    t.warmup_epochs = 1
    t.batch_size = 60
    t.r1 = 1e-3
    t.r2 = 1e-3

    config.eval.d = 2
    config.eval.k_values = [1, 5]
    return config


@pytest.fixture
def tiny_data(tiny_config):
    ds = tiny_config.dataset
    data = synth_correlated(ds.n_samples, ds.latent_dim, tuple(ds.dims), ds.target_correlations, seed=ds.data_seed)
    return make_splits(data, ds.split, ds.split_seed)
