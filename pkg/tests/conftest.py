import sys

import pytest

from dcsicta.group import GroupParams, make_params
from dcsicta.pads import keygen


@pytest.fixture(scope="session")
def toy():
    # p = 23: QR subgroup {1,2,3,4,6,8,9,12,13,16,18} of order 11
    return GroupParams(23, 11, 4, 2, 0)


@pytest.fixture(scope="session")
def params():
    return make_params(128, 64, 16, seed=b"tests")


@pytest.fixture(scope="session")
def big():
    return make_params(256, 128, 32, seed=b"tests")


@pytest.fixture(scope="session")
def keys5(params):
    return keygen(params, 5, b"k5")


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
