"""Deterministic discrete-event simulator of real-time media transport
over impaired links: RTP-style packetization and pacing, NACK/FEC repair,
timed jitter-buffer playout, RTCP-style feedback, delay-gradient congestion
control, and a lock-step bridge for external rate controllers."""

from .engine import ConfigError, Engine, SimulationError
from .scenario import load, preset_names, validate
from .session import RunOutput, Session, run_scenario

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "Engine",
    "RunOutput",
    "Session",
    "SimulationError",
    "__version__",
    "load",
    "preset_names",
    "run_scenario",
    "validate",
]
