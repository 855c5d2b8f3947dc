import pytest

from cfnoma.system import ChannelMatrix, SystemConfig

from shared import H2, H3, P2


@pytest.fixture
def two_user():
    cfg = SystemConfig(num_antennas=2, num_users=2, power_budget=P2)
    return cfg, ChannelMatrix(H2)


@pytest.fixture
def three_user():
    cfg = SystemConfig(num_antennas=3, num_users=3)
    return cfg, ChannelMatrix(H3)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = sorted(getattr(mod, "RESULTS", []), key=lambda s: int(s.split()[1].rstrip(":")))
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
