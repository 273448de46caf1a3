import pytest

from rtcagent import SimulatorProcess


@pytest.fixture(scope="session")
def sim():
    """One shared simulator bridge process (serves clients sequentially)."""
    with SimulatorProcess() as proc:
        yield proc
