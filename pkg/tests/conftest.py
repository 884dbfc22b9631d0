import numpy as np
import pytest

from glnar.gln import ThetaState
from glnar.simulate import SimSpec, simulate

PHI = (1.36, -0.37)


@pytest.fixture(scope="session")
def theta_true():
    return ThetaState(PHI, 0.11, 1.4)


@pytest.fixture(scope="session")
def sim_20k(theta_true):
    return simulate(SimSpec(theta_true, 20_000, seed=11))


@pytest.fixture(scope="session")
def sim_50k(theta_true):
    return simulate(SimSpec(theta_true, 50_000, seed=5))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def criterion(request):
    """Record one acceptance-criterion verdict; printed in the terminal summary.

    A test that errors before recording is reported as FAIL.
    """
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])
    seen = []

    def record(name, ok, detail):
        line = f"{name} {'PASS' if ok else 'FAIL'}  {detail}"
        seen.append(name)
        lines.append(line)
        print(line)
        return ok

    yield record
    if not seen:
        lines.append(f"{request.node.name} FAIL  (errored before a verdict)")


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
