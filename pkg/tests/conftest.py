from fractions import Fraction

import pytest
from hypothesis import settings

from ccgeom.polyalg import CoordinateChart, Polynomial, PolyVectorField
from ccgeom.spacefile import catalog_system

settings.register_profile("ccgeom", max_examples=40, deadline=None)
settings.load_profile("ccgeom")

XYT = CoordinateChart(("x", "y", "t"))


def field(chart, *exprs):
    """Field from per-coordinate {exponent: coeff} dicts or constants."""
    comps = []
    for e in exprs:
        if isinstance(e, dict):
            comps.append(Polynomial(chart.names, e))
        else:
            comps.append(Polynomial.constant(chart.names, Fraction(e)))
    return PolyVectorField(chart, comps)


@pytest.fixture(scope="session")
def heis():
    return catalog_system("heisenberg-1")


@pytest.fixture(scope="session")
def ex3():
    return catalog_system("example3-unit")


@pytest.fixture(scope="session")
def ex3_graded():
    return catalog_system("example3-graded")


@pytest.fixture(scope="session")
def euclid():
    return catalog_system("weighted-euclidean")


_VERDICTS = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_VERDICTS] = []


@pytest.fixture
def verdict(request):
    """Record one PASS/FAIL line for the acceptance summary."""
    lines = request.config.stash[_VERDICTS]

    def record(label, ok, detail):
        lines.append(f"{label}: {'PASS' if ok else 'FAIL'}  {detail}")
        print(lines[-1])
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_VERDICTS, [])
    if lines:
        terminalreporter.section("acceptance")
        for line in lines:
            terminalreporter.write_line(line)
