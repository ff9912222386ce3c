import numpy as np
import pytest

from cfi.data import gen_two_moons, split
from cfi.flow import ConditionalFlow
from cfi.train import TrainConfig, fit


@pytest.fixture(scope="session")
def moons_flow():
    """A small conditional flow fitted to two-moons; shared by slower tests."""
    ds = gen_two_moons(6000, rng=3)
    tr, va = split(ds, 0.15, rng=3)
    flow = ConditionalFlow.init(2, 1, 5, 12, np.random.default_rng(3))
    res = fit(flow, tr, va, TrainConfig(batch_size=512, grad_clip=0.5, max_epochs=80, seed=3))
    return res.flow


def random_flow(k=2, m=1, n_blocks=3, hidden=8, seed=0, layers=1, shift=None, scale=1.0, weight_scale=1.0):
    flow = ConditionalFlow.init(k, m, n_blocks, hidden, np.random.default_rng(seed), layers, shift, scale)
    for p in flow.parameters():
        p *= weight_scale
    return flow


_ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = []


@pytest.fixture(scope="session")
def acceptance_log(request):
    """Collects one pass/fail line per acceptance criterion for the terminal summary."""
    return request.config.stash[_ACCEPTANCE]


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
