import pytest

from hotproof.deployment import Deployment, KeySet, ManualClock
from hotproof.ln_core import reference_channels

T0 = 1_800_000_000


@pytest.fixture(scope="session")
def keys():
    return KeySet.from_seed("test-seed")


@pytest.fixture
def clock():
    return ManualClock(T0)


@pytest.fixture
def deployment(clock):
    return Deployment.create(reference_channels(), seed="test-seed", clock=clock)


# -- acceptance summary: one line per criterion ----------------------------

_acceptance = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _acceptance[report.nodeid] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for nodeid, outcome in _acceptance.items():
        name = nodeid.split("::")[-1]
        terminalreporter.write_line(f"{'PASS' if outcome == 'passed' else 'FAIL'}  {name}")
