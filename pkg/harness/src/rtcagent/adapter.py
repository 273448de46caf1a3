"""Environment adapter: bridge episodes as (observe, act, reward) steps.

Observation vector
------------------
The adapter turns each bridge observation into a fixed-order float vector.
The order is part of the interface (policies are only portable if it never
changes):

    index  field                 normalization             range
    0      rtt_ms                / rtt_max_ms, clipped     [0, 1]
    1      plr_window            already a fraction        [0, 1]
    2      plr_global            already a fraction        [0, 1]
    3      jitter_ms             / jitter_max_ms, clipped  [0, 1]
    4      retransmission_rate   already a fraction        [0, 1]
    5      goodput_bps           / rate_max_bps, clipped   [0, 1]
    6      rx_rate_bps           / rate_max_bps, clipped   [0, 1]
    7      current_target_bps    / rate_max_bps, clipped   [0, 1]

Action mapping
--------------
Policies emit a scalar in [-1, 1]; it maps affinely onto the bridge's
accepted range [ACTION_LOW_BPS, ACTION_HIGH_BPS] (0.4 to 10 Mbps), so a
well-formed policy can never trigger the bridge's clamping path.

One adapter drives one bridge connection; running N environments in
parallel means N simulator processes with one socket each.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .protocol import BridgeClient
from .reward import RewardSpec

OBSERVATION_ORDER = (
    "rtt_ms",
    "plr_window",
    "plr_global",
    "jitter_ms",
    "retransmission_rate",
    "goodput_bps",
    "rx_rate_bps",
    "current_target_bps",
)

OBSERVATION_DIM = len(OBSERVATION_ORDER)

ACTION_LOW_BPS = 400_000
ACTION_HIGH_BPS = 10_000_000


def action_to_bps(action: float) -> float:
    """Map a policy action in [-1, 1] onto the accepted bitrate range."""
    unit = (float(action) + 1.0) / 2.0
    unit = min(1.0, max(0.0, unit))
    return ACTION_LOW_BPS + unit * (ACTION_HIGH_BPS - ACTION_LOW_BPS)


def bps_to_action(bps: float) -> float:
    """Inverse of action_to_bps, clipped to [-1, 1]."""
    unit = (float(bps) - ACTION_LOW_BPS) / (ACTION_HIGH_BPS - ACTION_LOW_BPS)
    return min(1.0, max(-1.0, unit * 2.0 - 1.0))


@dataclass(frozen=True)
class NormBounds:
    """Scales that map raw observation fields into [0, 1]."""

    rtt_max_ms: float = 1000.0
    jitter_max_ms: float = 500.0
    rate_max_bps: float = 10_000_000.0


def observation_vector(obs: dict, bounds: NormBounds) -> np.ndarray:
    """Normalize one bridge observation into the fixed-order vector."""
    def unit(value: float, scale: float) -> float:
        return min(1.0, max(0.0, value / scale))

    return np.array([
        unit(obs["rtt_ms"], bounds.rtt_max_ms),
        unit(obs["plr_window"], 1.0),
        unit(obs["plr_global"], 1.0),
        unit(obs["jitter_ms"], bounds.jitter_max_ms),
        unit(obs["retransmission_rate"], 1.0),
        unit(obs["goodput_bps"], bounds.rate_max_bps),
        unit(obs["rx_rate_bps"], bounds.rate_max_bps),
        unit(obs["current_target_bps"], bounds.rate_max_bps),
    ], dtype=np.float32)


class EnvAdapter:
    """Step-based wrapper over one bridge connection.

    reset() starts an episode and returns the first observation vector.
    step(action) answers the pending observation and returns
    (vector, reward, done, info); the reward is computed from the
    observation that follows the action, so it reflects the action's
    consequences. The terminal step carries reward 0.0 and the run summary
    in info["summary"] (the final interval has no follow-up observation).
    """

    def __init__(self, client: BridgeClient, *, scenario: str,
                 duration_s: float | None = None,
                 decision_interval_s: float = 1.0,
                 reward: RewardSpec | None = None,
                 bounds: NormBounds | None = None):
        self.client = client
        self.scenario = scenario
        self.duration_s = duration_s
        self.decision_interval_s = decision_interval_s
        self.reward = reward if reward is not None else RewardSpec()
        self.bounds = bounds if bounds is not None else NormBounds()
        self._pending: dict | None = None

    @property
    def pending_observation(self) -> dict | None:
        """The raw observation awaiting an action, if any."""
        return self._pending

    def reset(self, seed: int) -> np.ndarray:
        obs = self.client.reset(
            self.scenario, seed, duration_s=self.duration_s,
            decision_interval_s=self.decision_interval_s)
        self._pending = obs
        return observation_vector(obs, self.bounds)

    def step(self, action: float) -> tuple[np.ndarray, float, bool, dict]:
        if self._pending is None:
            raise RuntimeError("step() before reset(), or after the episode "
                               "ended")
        pending = self._pending
        reply = self.client.act(pending["episode_id"], pending["step_id"],
                                action_to_bps(action))
        if reply["type"] == "end":
            self._pending = None
            vec = np.zeros(OBSERVATION_DIM, dtype=np.float32)
            return vec, 0.0, True, {"summary": reply["summary"]}
        self._pending = reply
        vec = observation_vector(reply, self.bounds)
        return vec, self.reward.compute(reply), False, {"obs": reply}


class EchoAgent:
    """Replays a recorded action stream byte for byte.

    Feed it the sent_lines captured by a recording BridgeClient (the reset
    line followed by every act line); run() pushes each line verbatim
    through a fresh connection. With the same scenario and seed the replies
    are byte-identical to the original observation log, which is how bridge
    conformance is checked.
    """

    def __init__(self, sent_lines: list[bytes]):
        self.sent_lines = list(sent_lines)

    def run(self, client: BridgeClient) -> list[dict]:
        replies = []
        for line in self.sent_lines:
            replies.append(client.exchange_raw(line))
        return replies
