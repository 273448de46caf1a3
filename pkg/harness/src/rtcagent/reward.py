"""Per-step reward for rate-control policies.

The reward trades throughput against latency and loss:

    reward = w_rate * (goodput_bps / max_rate_bps)
           - w_rtt  * (rtt_ms / rtt_ref_ms)
           - w_loss * plr_window

All three inputs come from the observation that follows the action. With
bounded inputs the reward is bounded: goodput and plr_window are already
confined to [0, max_rate] and [0, 1], so only extreme RTTs stretch the
range. The function is monotone the way a rate controller should be
graded: it never decreases when goodput rises and never increases when
RTT or loss rises.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class RewardSpec:
    """Reward weights and reference scales.

    The defaults weight loss hardest (a lost packet costs user experience
    directly), throughput at full weight, and delay mildly against a
    200 ms interactive budget.
    """

    w_rate: float = 1.0
    w_rtt: float = 0.3
    w_loss: float = 2.0
    rtt_ref_ms: float = 200.0
    max_rate_bps: float = 10_000_000.0

    def compute(self, obs: dict) -> float:
        """Reward for one observation (uses goodput, RTT, windowed PLR)."""
        return (self.w_rate * obs["goodput_bps"] / self.max_rate_bps
                - self.w_rtt * obs["rtt_ms"] / self.rtt_ref_ms
                - self.w_loss * obs["plr_window"])

    def as_dict(self) -> dict:
        return {"w_rate": self.w_rate, "w_rtt": self.w_rtt,
                "w_loss": self.w_loss, "rtt_ref_ms": self.rtt_ref_ms,
                "max_rate_bps": self.max_rate_bps}
