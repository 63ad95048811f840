import numpy as np
import pytest

from dipkit.kernel import build_kernel, fourier_kernel
from dipkit.lattice import LatticeSpec
from dipkit.spectral import constants


@pytest.fixture(scope="session")
def spec2():
    return LatticeSpec(3, 2, 0.25)


@pytest.fixture(scope="session")
def table2(spec2):
    return build_kernel(spec2)


@pytest.fixture(scope="session")
def fk2(table2):
    return fourier_kernel(table2)


@pytest.fixture(scope="session")
def rec_quarter():
    """Cross-validated constants at the L=2 default screening."""
    return constants(0.25)


@pytest.fixture(scope="session")
def spec4():
    return LatticeSpec.auto(3, 4)


@pytest.fixture(scope="session")
def table4(spec4):
    return build_kernel(spec4)


@pytest.fixture(scope="session")
def fk4(table4):
    return fourier_kernel(table4)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240817)


ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def acceptance_log():
    """Shared sink for the acceptance criteria verdict lines."""
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
