"""Scenario validation, preset integrity, and stochastic expansion."""

import json

import pytest

from rtcnetlab.engine import ConfigError, Engine
from rtcnetlab.scenario import (build_link_profile, export, load, preset_names,
                                preset_table, schema, validate)

MINIMAL = {"duration_s": 10}


def test_minimal_scenario_fills_defaults():
    out = validate(dict(MINIMAL))
    assert out["name"] == "custom"
    assert out["transport"] == "udp"
    assert out["encoder"]["fps"] == 20
    assert out["reliability"]["nack_enabled"] is True
    assert out["playout"]["playout_delay_ms"] == 200
    assert out["feedback"]["twcc_period_ms"] == 50
    assert out["controller"]["kind"] == "gcc"
    assert len(out["forward_links"]) == 1
    assert out["multihome_ratio"] == 0.5


def test_validate_is_idempotent():
    once = validate(dict(MINIMAL))
    assert validate(json.loads(json.dumps(once))) == once


def test_reverse_link_defaults_to_triple_capacity():
    out = validate({"duration_s": 10,
                    "forward_links": [{"capacity_mbps": 10.0,
                                       "delay_ms": 25.0}]})
    rev = out["reverse_link"]
    assert rev["capacity_mbps"] == 30.0
    assert rev["delay_ms"] == 25.0
    assert rev["name"] == "rev"


@pytest.mark.parametrize("bad", [
    {"duration_s": 10, "surprise": 1},
    {"duration_s": 10, "encoder": {"fsp": 30}},
    {"duration_s": 10, "reliability": {"nacks": True}},
    {"duration_s": 10, "playout": {"delay": 100}},
    {"duration_s": 10, "feedback": {"twcc": 50}},
    {"duration_s": 10, "controller": {"rate": 1}},
    {"duration_s": 10, "controller": {"gcc": {"betas": 0.9}}},
    {"duration_s": 10, "forward_links": [{"bandwidth": 5}]},
    {"duration_s": 10, "forward_links": [
        {"congestion_windows": [{"begin_s": 0, "end_s": 1}]}]},
    {"duration_s": 10, "forward_links": [
        {"congestion_episodes": {"count": 1, "factor_min": 0.5,
                                 "factor_max": 0.5, "duration_min_s": 1,
                                 "duration_max_s": 1, "region_start_s": 0,
                                 "region_end_s": 5, "surprise": 1}}]},
])
def test_unknown_keys_are_rejected_everywhere(bad):
    with pytest.raises(ConfigError, match="unknown key"):
        validate(bad)


@pytest.mark.parametrize("bad,fragment", [
    ({}, "duration_s"),
    ({"duration_s": "long"}, "duration_s"),
    ({"duration_s": 10, "media_stop_s": 11}, "media_stop_s"),
    ({"duration_s": 10, "media_stop_s": 0}, "media_stop_s"),
    ({"duration_s": 10, "transport": "sctp"}, "transport"),
    ({"duration_s": 10, "default_seed": True}, "default_seed"),
    ({"duration_s": 10, "default_seed": 1.5}, "default_seed"),
    ({"duration_s": 10, "pacing_multiplier": 0.5}, "pacing_multiplier"),
    ({"duration_s": 10, "encoder": {"fps": 0}}, "fps"),
    ({"duration_s": 10, "encoder": {"size_jitter": 2.0}}, "size_jitter"),
    ({"duration_s": 10, "encoder": {"keyframe_interval_s": 0}},
     "keyframe_interval_s"),
    ({"duration_s": 10, "reliability": {"nack_enabled": 1}}, "nack_enabled"),
    ({"duration_s": 10, "reliability": {"fec_delta_group_size": 1}},
     "fec_delta_group_size"),
    ({"duration_s": 10, "playout": {"playout_delay_ms": 0}},
     "playout_delay_ms"),
    ({"duration_s": 10, "feedback": {"twcc_period_ms": 0}}, "twcc_period_ms"),
    ({"duration_s": 10, "controller": {"kind": "pid"}}, "controller.kind"),
    ({"duration_s": 10, "controller": {"kind": "scripted"}}, "script"),
    ({"duration_s": 10, "controller": {"kind": "scripted",
                                       "script": [[1]]}}, "script"),
    ({"duration_s": 10, "multihome_ratio": 1.5}, "multihome_ratio"),
    ({"duration_s": 10, "forward_links": []}, "forward_links"),
    ({"duration_s": 10, "forward_links": [{}, {}, {}]}, "forward_links"),
    ({"duration_s": 10, "forward_links": [{"name": "a"}, {"name": "a"}]},
     "unique"),
    ({"duration_s": 10, "forward_links": [{"capacity_mbps": 0.001}]},
     "capacity_mbps"),
    ({"duration_s": 10, "forward_links": [{"random_loss": 1.2}]},
     "random_loss"),
    ({"duration_s": 10, "forward_links": [{"queue_kbytes": 1.0}]},
     "queue_kbytes"),
    ({"duration_s": 10, "forward_links": [{"congestion_windows": [
        {"start_s": 5, "end_s": 1, "capacity_factor": 0.5}]}]}, "end_s"),
    ({"duration_s": 10, "forward_links": [{"congestion_windows": [
        {"start_s": 0, "end_s": 1, "capacity_factor": 0.0}]}]},
     "capacity_factor"),
    ({"duration_s": 10, "forward_links": [{"congestion_episodes": {
        "count": 2.5, "factor_min": 0.5, "factor_max": 0.5,
        "duration_min_s": 1, "duration_max_s": 1, "region_start_s": 0,
        "region_end_s": 5}}]}, "count"),
    ({"duration_s": 10, "forward_links": [{"congestion_episodes": {
        "count": 2, "factor_min": 0.6, "factor_max": 0.5,
        "duration_min_s": 1, "duration_max_s": 1, "region_start_s": 0,
        "region_end_s": 5}}]}, "factor_max"),
    ({"duration_s": 10, "forward_links": [{"congestion_episodes": {
        "count": 2, "factor_min": 0.5, "factor_max": 0.5,
        "duration_min_s": 1, "duration_max_s": 1, "region_start_s": 5,
        "region_end_s": 5}}]}, "region_end_s"),
    ({"duration_s": 10, "forward_links": [{"background_bursts": {
        "on_min_s": 2, "on_max_s": 1, "off_min_s": 1, "off_max_s": 1,
        "mbps_min": 1, "mbps_max": 1, "region_end_s": 5}}]}, "on_max_s"),
])
def test_bad_values_are_rejected_with_the_offending_path(bad, fragment):
    with pytest.raises(ConfigError) as err:
        validate(bad)
    assert fragment in str(err.value)


def test_every_preset_validates():
    table = preset_table()
    assert set(table) == set(preset_names())
    for name, scenario in table.items():
        assert scenario["name"] == name
        assert scenario["duration_s"] > 0
        assert validate(scenario) == scenario


def test_load_accepts_presets_and_files(tmp_path):
    easy = load("easy")
    assert easy["name"] == "easy"
    path = tmp_path / "custom.json"
    path.write_text(export(easy))
    assert load(str(path)) == easy


def test_load_rejects_unknown_names_and_bad_files(tmp_path):
    with pytest.raises(ConfigError, match="presets"):
        load("no_such_preset")
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    with pytest.raises(ConfigError, match="broken.json"):
        load(str(path))


def test_export_is_canonical():
    text = export(load("easy"))
    assert text == export(json.loads(text))
    assert json.loads(text) == load("easy")


def test_link_profile_unit_conversion():
    spec = validate({"duration_s": 10, "forward_links": [{
        "capacity_mbps": 6.0, "delay_ms": 25.0, "queue_kbytes": 200.0,
        "random_loss": 0.02, "handovers": [{"at_s": 1.0,
                                            "duration_ms": 250.0}],
        "outages": [{"start_s": 2.0, "end_s": 3.0}],
    }]})["forward_links"][0]
    profile = build_link_profile(spec, Engine(1))
    assert profile.capacity_bps == 6_000_000
    assert profile.delay_us == 25_000
    assert profile.queue_limit_bytes == 200_000
    assert profile.random_loss == 0.02
    assert profile.pauses[0].start == 1_000_000
    assert profile.pauses[0].end == 1_250_000
    assert profile.outages[0].start == 2_000_000


def test_expansion_is_deterministic_and_isolated():
    spec = load("moderate")["forward_links"][0]
    plain = build_link_profile(spec, Engine(42))
    engine = Engine(42)
    noise = engine.stream("something.else")
    for _ in range(1_000):
        noise.uniform(0.0, 1.0)
    # Consuming other streams first must not shift the channel realization.
    assert build_link_profile(spec, engine).congestion == plain.congestion
    assert build_link_profile(spec, Engine(42)).background == plain.background
    assert build_link_profile(spec, Engine(43)).congestion != plain.congestion


def test_episode_expansion_is_stratified_within_bounds():
    spec = load("moderate")["forward_links"][0]
    episodes = spec["congestion_episodes"]
    profile = build_link_profile(spec, Engine(7))
    windows = profile.congestion
    assert len(windows) == episodes["count"]
    block_us = (episodes["region_end_s"] - episodes["region_start_s"]) \
        * 1_000_000 / episodes["count"]
    for i, w in enumerate(windows):
        duration = w.end - w.start
        assert episodes["duration_min_s"] * 1e6 <= duration \
            <= episodes["duration_max_s"] * 1e6
        assert episodes["factor_min"] <= w.capacity_factor \
            <= episodes["factor_max"]
        lo = episodes["region_start_s"] * 1e6 + i * block_us
        assert lo <= w.start <= lo + block_us


def test_burst_expansion_stays_in_region_and_in_range():
    spec = load("moderate")["forward_links"][0]
    bursts = spec["background_bursts"]
    profile = build_link_profile(spec, Engine(9))
    windows = profile.background
    assert windows, "the 600 s region fits many bursts"
    last_end = 0
    for w in windows:
        assert w.start >= last_end
        last_end = w.end
        assert w.end <= bursts["region_end_s"] * 1e6
        assert bursts["on_min_s"] * 1e6 <= w.end - w.start \
            <= bursts["on_max_s"] * 1e6
        assert bursts["mbps_min"] * 1e6 <= w.bps <= bursts["mbps_max"] * 1e6


def test_schema_describes_the_format():
    info = schema()
    assert "duration_s" in info["top_level_keys"]
    assert info["transports"] == ["udp", "tcp"]
    assert set(info["presets"]) == set(preset_names())
    assert info["defaults"]["playout"]["playout_delay_ms"] == 200
    assert "congestion_episodes" in info["link_keys"]
