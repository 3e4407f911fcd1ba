import numpy as np
import pytest

from spintwa.model import LatticeSpec, model_preset

_ACCEPTANCE = []


def record_acceptance(number: int, passed: bool, detail: str) -> None:
    line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
    _ACCEPTANCE.append((number, line))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_ACCEPTANCE):
        terminalreporter.write_line(line)


@pytest.fixture
def acceptance():
    return record_acceptance


@pytest.fixture(scope="session")
def chain11():
    return LatticeSpec("chain", 11)


@pytest.fixture(scope="session")
def ising11(chain11):
    return model_preset("ising", chain11)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
