import pytest

from crossfire import scenarios
from crossfire.engine import load_scenario
from crossfire.netmodel import build_initial_routing, load_topology

ACCEPTANCE_LINES = []


@pytest.fixture
def fig1_spec():
    return scenarios.figure1()


@pytest.fixture
def fig1_topo(fig1_spec):
    return load_topology(fig1_spec["topology"])


@pytest.fixture
def fig1_routing(fig1_topo):
    return build_initial_routing(fig1_topo)


@pytest.fixture
def fig1_cfg(fig1_spec):
    return load_scenario(fig1_spec)


@pytest.fixture
def criterion():
    """Record a PASS/FAIL line for the acceptance report, then assert."""

    def check(name, ok, detail=""):
        ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}".rstrip())
        assert ok, f"{name}: {detail}"

    return check


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
