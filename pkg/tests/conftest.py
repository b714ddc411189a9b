import sys

import pytest
from hypothesis import settings

from capskin.capmodel import TaxelModel
from capskin.dynamics import SensorChannelConfig
from capskin.topology import build_reference_topology

settings.register_profile("repro", derandomize=True, deadline=None)
settings.load_profile("repro")


@pytest.fixture(scope="session")
def model():
    return TaxelModel()


@pytest.fixture(scope="session")
def reference_topology():
    return build_reference_topology()


@pytest.fixture
def ideal_cfg():
    return SensorChannelConfig.ideal()


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    lines = getattr(acceptance, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
