import numpy as np
import pytest
from hypothesis import settings

from lagmpc.mpc import MpcConfig
from lagmpc.nn import LaguerreHead
from lagmpc.plant import BuckBoost

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture(scope="session")
def cfg():
    return MpcConfig()


@pytest.fixture(scope="session")
def plant():
    return BuckBoost()


@pytest.fixture(scope="session")
def basis(cfg):
    return cfg.basis()


@pytest.fixture(scope="session")
def head(cfg, basis):
    return LaguerreHead.from_basis(basis, cfg.u_ss)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture
def verdict(request):
    """Record one acceptance line; the summary prints them in criterion order."""
    lines = request.config.stash.setdefault(ACCEPTANCE, {})

    def record(number, name, passed, detail):
        lines[number] = f"{'PASS' if passed else 'FAIL'} criterion {number:>2} {name}: {detail}"
        return passed

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for k in sorted(lines):
            terminalreporter.write_line(lines[k])
