"""Reward formula: defaults, exact values, bounds, monotonicity."""

import random

from rtcagent import RewardSpec


def obs(goodput=0.0, rtt=0.0, plr=0.0):
    return {"goodput_bps": goodput, "rtt_ms": rtt, "plr_window": plr}


def test_default_weights_and_scales():
    spec = RewardSpec()
    assert spec.w_rate == 1.0
    assert spec.w_rtt == 0.3
    assert spec.w_loss == 2.0
    assert spec.rtt_ref_ms == 200.0
    assert spec.max_rate_bps == 10_000_000.0


def test_hand_computed_value():
    spec = RewardSpec()
    value = spec.compute(obs(goodput=5_000_000, rtt=100, plr=0.02))
    assert abs(value - (0.5 - 0.15 - 0.04)) < 1e-12


def test_each_term_isolated():
    spec = RewardSpec()
    assert spec.compute(obs(goodput=10_000_000)) == 1.0
    assert spec.compute(obs(rtt=200)) == -0.3
    assert spec.compute(obs(plr=1.0)) == -2.0
    assert spec.compute(obs()) == 0.0


def test_bounded_for_bounded_inputs():
    spec = RewardSpec()
    rng = random.Random(0)
    lo = -spec.w_rtt * 1000 / spec.rtt_ref_ms - spec.w_loss
    hi = spec.w_rate
    for _ in range(500):
        value = spec.compute(obs(goodput=rng.uniform(0, 10_000_000),
                                 rtt=rng.uniform(0, 1000),
                                 plr=rng.uniform(0, 1)))
        assert lo <= value <= hi


def test_monotone_in_each_input():
    spec = RewardSpec()
    rng = random.Random(1)
    for _ in range(200):
        goodput = rng.uniform(0, 10_000_000)
        rtt = rng.uniform(0, 800)
        plr = rng.uniform(0, 1)
        base = spec.compute(obs(goodput, rtt, plr))
        bump = rng.uniform(1e-6, 1e6)
        assert spec.compute(obs(goodput + bump, rtt, plr)) >= base
        assert spec.compute(obs(goodput, rtt + rng.uniform(0, 100),
                                plr)) <= base
        extra = rng.uniform(0, 1 - plr)
        assert spec.compute(obs(goodput, rtt, plr + extra)) <= base


def test_as_dict_embeds_everything():
    d = RewardSpec().as_dict()
    assert set(d) == {"w_rate", "w_rtt", "w_loss", "rtt_ref_ms",
                      "max_rate_bps"}


def test_custom_weights_scale_linearly():
    spec = RewardSpec(w_rate=2.0, w_rtt=0.6, w_loss=4.0)
    base = RewardSpec()
    sample = obs(goodput=3_000_000, rtt=60, plr=0.1)
    assert abs(spec.compute(sample) - 2 * base.compute(sample)) < 1e-12
