"""Observation layout, normalization, action mapping, and the live adapter."""

import numpy as np
import pytest

from rtcagent import (ACTION_HIGH_BPS, ACTION_LOW_BPS, OBSERVATION_DIM,
                      OBSERVATION_ORDER, EnvAdapter, NormBounds,
                      action_to_bps, bps_to_action, observation_vector)


def raw_obs(**over):
    obs = {"rtt_ms": 50.0, "plr_window": 0.01, "plr_global": 0.005,
           "jitter_ms": 10.0, "retransmission_rate": 0.02,
           "goodput_bps": 4_000_000.0, "rx_rate_bps": 4_500_000.0,
           "current_target_bps": 5_000_000, "sim_time_s": 3.0}
    obs.update(over)
    return obs


def test_observation_order_is_fixed():
    assert OBSERVATION_ORDER == (
        "rtt_ms", "plr_window", "plr_global", "jitter_ms",
        "retransmission_rate", "goodput_bps", "rx_rate_bps",
        "current_target_bps")
    assert OBSERVATION_DIM == 8


def test_vector_normalizes_each_field():
    vec = observation_vector(raw_obs(), NormBounds())
    assert vec.dtype == np.float32
    assert vec.shape == (OBSERVATION_DIM,)
    expected = [50 / 1000, 0.01, 0.005, 10 / 500, 0.02,
                0.4, 0.45, 0.5]
    assert np.allclose(vec, expected, atol=1e-6)


def test_vector_clips_into_unit_interval():
    vec = observation_vector(
        raw_obs(rtt_ms=5000.0, jitter_ms=9999.0, rx_rate_bps=25e6,
                goodput_bps=25e6, current_target_bps=25e6),
        NormBounds())
    assert float(vec.max()) == 1.0
    assert float(vec.min()) >= 0.0


def test_custom_bounds_change_the_scale():
    vec = observation_vector(raw_obs(), NormBounds(rtt_max_ms=100.0))
    assert vec[0] == pytest.approx(0.5)


def test_action_mapping_spans_the_accepted_range():
    assert action_to_bps(-1.0) == ACTION_LOW_BPS
    assert action_to_bps(1.0) == ACTION_HIGH_BPS
    assert action_to_bps(0.0) == pytest.approx(5_200_000)
    # values beyond the interval are clipped, never out of range
    assert action_to_bps(-3.0) == ACTION_LOW_BPS
    assert action_to_bps(3.0) == ACTION_HIGH_BPS


def test_action_mapping_round_trips():
    for action in (-1.0, -0.5, 0.0, 0.25, 1.0):
        assert bps_to_action(action_to_bps(action)) == pytest.approx(action)


def test_adapter_episode_loop(sim):
    with sim.client() as client:
        adapter = EnvAdapter(client, scenario="easy", duration_s=4,
                             decision_interval_s=1.0)
        vec = adapter.reset(seed=3)
        assert vec.shape == (OBSERVATION_DIM,)
        assert float(vec.min()) >= 0.0 and float(vec.max()) <= 1.0
        assert adapter.pending_observation["step_id"] == 0
        steps = 0
        done = False
        while not done:
            vec, reward, done, info = adapter.step(1.0)
            steps += 1
            assert np.isfinite(reward)
            if not done:
                assert info["obs"]["current_target_bps"] == ACTION_HIGH_BPS
                assert vec[7] == pytest.approx(1.0)
        assert steps == 4
        assert "aggregates" in info["summary"]
        assert adapter.pending_observation is None
        with pytest.raises(RuntimeError, match="reset"):
            adapter.step(0.0)


def test_adapter_reward_follows_the_action(sim):
    with sim.client() as client:
        adapter = EnvAdapter(client, scenario="easy", duration_s=3,
                             decision_interval_s=1.0)
        adapter.reset(seed=9)
        _, reward, _, info = adapter.step(1.0)
        expected = adapter.reward.compute(info["obs"])
        assert reward == pytest.approx(expected)


def test_step_before_reset_raises(sim):
    with sim.client() as client:
        adapter = EnvAdapter(client, scenario="easy", duration_s=2)
        with pytest.raises(RuntimeError):
            adapter.step(0.0)
