import sys

import numpy as np
import pytest

from nexus import kernels
from nexus.model import ModelConfig, build_model

BACKENDS = ["numpy"] + (["numba"] if kernels.JIT_ENABLED else [])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(params=BACKENDS)
def backend(request):
    prev = kernels.set_backend(request.param)
    yield request.param
    kernels.set_backend(prev)


@pytest.fixture
def toy_config():
    return ModelConfig(n_nodes=4, window=12, horizon=12, d_in=1, d_out=1, hidden=32, d_emb=16, layers=1, period=24)


@pytest.fixture
def toy_model(toy_config):
    return build_model(toy_config)


def toy_batch(config, batch=2, seed=0):
    r = np.random.default_rng(seed)
    x = r.standard_normal((batch, config.n_nodes, config.window, config.d_in))
    y = r.standard_normal((batch, config.n_nodes, config.horizon, config.d_out))
    steps = np.arange(config.window)[None, :] + r.integers(0, 500, size=(batch, 1))
    return x, y, steps


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
