"""Shared fixtures: expensive preset runs are executed once per session."""

import time

import pytest

from rtcnetlab.engine import Engine
from rtcnetlab.scenario import load, validate
from rtcnetlab.session import Session, run_scenario


def run_with_decisions(scenario_or_name, seed=1, **overrides):
    """run_scenario, plus the controller decision log when GCC is driving."""
    scenario = load(scenario_or_name) if isinstance(scenario_or_name, str) \
        else validate(scenario_or_name)
    for key, value in overrides.items():
        scenario[key] = value
    scenario = validate(scenario)
    engine = Engine(seed)
    session = Session(engine, scenario)
    decisions = []
    if hasattr(session.controller, "on_decision"):
        session.controller.on_decision = decisions.append
    out = session.run()
    return out, decisions


@pytest.fixture(scope="session")
def easy_runs():
    """Two identical easy runs plus the wall-clock time of the first."""
    t0 = time.monotonic()
    first = run_scenario("easy", seed=1)
    wall_s = time.monotonic() - t0
    second = run_scenario("easy", seed=1)
    return first, second, wall_s


@pytest.fixture(scope="session")
def easy_decisions():
    out, decisions = run_with_decisions("easy", seed=1)
    return out, decisions


@pytest.fixture(scope="session")
def congested_arms():
    """The transport/reliability comparison family, all on seed 1."""
    return {
        "udp": run_scenario("udp_vs_tcp_congested", seed=1),
        "tcp": run_scenario("udp_vs_tcp_congested", seed=1, transport="tcp"),
        "plain": run_scenario("congested_plain", seed=1),
        "nack": run_scenario("congested_nack", seed=1),
        "hnack": run_scenario("congested_hnack", seed=1),
    }


@pytest.fixture(scope="session")
def fec_arms():
    return {
        "off": run_scenario("fec_off", seed=1),
        "on": run_scenario("fec_on", seed=1),
    }


@pytest.fixture(scope="session")
def moderate_pair():
    gcc = run_scenario("moderate", seed=1)
    scenario = load("moderate")
    scenario["controller"] = {"kind": "fixed", "start_rate_bps": 9_500_000}
    aggressive = Session(Engine(1), validate(scenario)).run()
    return gcc, aggressive
