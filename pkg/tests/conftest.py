import math

import numpy as np
import pytest

from pointscatter.geometry import DirichletBox, FlatTorus

TWO_PI = 2 * math.pi


@pytest.fixture(scope="session")
def torus():
    return FlatTorus(2, TWO_PI)


@pytest.fixture(scope="session")
def torus3():
    return FlatTorus(3, TWO_PI)


@pytest.fixture(scope="session")
def box():
    return DirichletBox(2, 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


_ACCEPTANCE = {}


@pytest.fixture(scope="session")
def acceptance():
    """Record one PASS/FAIL line per acceptance criterion."""

    def report(number, passed, detail):
        line = f"CRITERION {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        _ACCEPTANCE[number] = line
        print(line)
        return passed

    return report


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        terminalreporter.write_line(_ACCEPTANCE[n])
