import sys

import pytest

from coopisac.grid import make_baseline
from coopisac.scenario import desk_scenario, optimizer_desk_scenario, table2_tree


@pytest.fixture(scope="session")
def desk():
    return desk_scenario()


@pytest.fixture(scope="session")
def small():
    """8 x 4 grid for exhaustive or finite-difference checks."""
    return desk_scenario(8, 4)


@pytest.fixture(scope="session")
def opt_desk():
    return optimizer_desk_scenario(0)


@pytest.fixture(scope="session")
def desk_tree():
    return table2_tree(32, 16)


@pytest.fixture(scope="session")
def tdb_plan(desk):
    return make_baseline("tdb", desk, 0.5)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n, (ok, detail) in sorted(results.items()):
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
