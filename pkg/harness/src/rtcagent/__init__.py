"""Learning-agent harness for the rtcnetlab control bridge.

Talks to the simulator exclusively through its public surfaces: the
newline-delimited JSON bridge socket for live episodes and the CLI
artifacts for baseline runs. Provides an environment adapter with a fixed,
documented observation layout, a SAC trainer, and agent-vs-GCC evaluation
tooling.
"""

from .adapter import (ACTION_HIGH_BPS, ACTION_LOW_BPS, OBSERVATION_DIM,
                      OBSERVATION_ORDER, EnvAdapter, EchoAgent, NormBounds,
                      action_to_bps, bps_to_action, observation_vector)
from .protocol import (BridgeClient, BridgeDisconnect, BridgeProtocolError,
                       SimulatorProcess, encode_line)
from .reward import RewardSpec
from .sac import ReplayBuffer, SacAgent, SacConfig
from .train import TrainConfig, Trainer, TrainingAborted

__all__ = [
    "ACTION_HIGH_BPS", "ACTION_LOW_BPS", "OBSERVATION_DIM",
    "OBSERVATION_ORDER", "BridgeClient", "BridgeDisconnect",
    "BridgeProtocolError", "EchoAgent", "EnvAdapter", "NormBounds",
    "ReplayBuffer", "RewardSpec", "SacAgent", "SacConfig",
    "SimulatorProcess", "TrainConfig", "Trainer", "TrainingAborted",
    "action_to_bps", "bps_to_action", "encode_line", "observation_vector",
]
