"""Scenario schema, strict validation, and the built-in presets.

A scenario is a plain dict (JSON on disk) describing one run: encoder,
reliability, playout, feedback, controller, and link sections. Validation
is strict: unknown keys anywhere raise ConfigError naming the key, so a
typo cannot silently fall back to a default.

Links can carry fixed impairment windows (congestion_windows, handovers,
outages, background_windows) and two stochastic processes expanded at build
time from named RNG streams (congestion_episodes, background_bursts). The
stream names depend only on the link name, so two runs that differ in
transport or reliability settings still see the identical channel
realization for the same seed, which is what makes same-seed A/B
comparisons meaningful.

Episode placement is stratified: the episode region is split into `count`
equal blocks and each episode is placed uniformly inside its own block, so
every run gets episodes spread over the whole region instead of clumping.
"""

from __future__ import annotations

import copy
import json

from .engine import ConfigError, Engine, ms_to_us, s_to_us
from .network import (BackgroundWindow, CongestionWindow, LinkProfile,
                      OutageWindow, PauseWindow)

TRANSPORTS = ("udp", "tcp")
CONTROLLER_KINDS = ("gcc", "fixed", "scripted", "bridge")

# Reverse capacity defaults to 3x forward when a scenario does not declare
# its own reverse link (downlink/uplink asymmetry of cellular deployments).
REVERSE_CAPACITY_RATIO = 3.0


def _require(cond: bool, path: str, message: str) -> None:
    if not cond:
        raise ConfigError(f"scenario.{path}: {message}")


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _check_keys(path: str, given: dict, allowed) -> None:
    _require(isinstance(given, dict), path, "must be a mapping")
    for key in given:
        if key not in allowed:
            raise ConfigError(f"scenario.{path}: unknown key {key!r}")


def _number(path: str, d: dict, key: str, lo=None, hi=None, default=None):
    v = d.get(key, default)
    _require(_is_number(v), f"{path}.{key}", "must be a number")
    if lo is not None:
        _require(v >= lo, f"{path}.{key}", f"must be >= {lo}")
    if hi is not None:
        _require(v <= hi, f"{path}.{key}", f"must be <= {hi}")
    return v


def _boolean(path: str, d: dict, key: str, default: bool) -> bool:
    v = d.get(key, default)
    _require(isinstance(v, bool), f"{path}.{key}", "must be a boolean")
    return v


# --------------------------------------------------------------------- schema

_ENCODER_DEFAULTS = {
    "fps": 20,
    "start_bitrate_bps": 1_000_000,
    "min_bitrate_bps": 400_000,
    "max_bitrate_bps": 10_000_000,
    "keyframe_interval_s": None,
    "keyframe_size_ratio": 4.0,
    "encode_latency_ms": 1.0,
    "size_jitter": 0.0,
}

_RELIABILITY_DEFAULTS = {
    "nack_enabled": True,
    "fec_enabled": False,
    "fec_delta_group_size": 10,
    "fec_key_group_size": 4,
    "rtx_age_ms": 1000,
    "rtx_bandwidth_fraction": 0.25,
    "rtx_max_count": 10,
}

_PLAYOUT_DEFAULTS = {
    "playout_delay_ms": 200,
    "max_stall_ms": 500,
    "rtx_wait_ms": 250,
    "decode_latency_ms": 1,
    "nack_interval_ms": 20,
    "nack_max_count": 10,
    "keyframe_request_enabled": True,
    "resync_backlog_frames": 5,
}

_FEEDBACK_DEFAULTS = {
    "twcc_period_ms": 50,
    "rr_period_ms": 1000,
    "no_cost": False,
}

_CONTROLLER_DEFAULTS = {
    "kind": "gcc",
    "start_rate_bps": 1_000_000,
    "script": None,
    "gcc": None,
}

_LINK_KEYS = (
    "name", "capacity_mbps", "delay_ms", "queue_kbytes", "random_loss",
    "background_mbps", "available_until_s", "congestion_windows",
    "handovers", "outages", "background_windows", "congestion_episodes",
    "background_bursts",
)

_EPISODE_KEYS = ("count", "factor_min", "factor_max", "duration_min_s",
                 "duration_max_s", "region_start_s", "region_end_s",
                 "extra_delay_ms")

_BURST_KEYS = ("on_min_s", "on_max_s", "off_min_s", "off_max_s",
               "mbps_min", "mbps_max", "region_start_s", "region_end_s")

_TOP_KEYS = ("name", "duration_s", "media_stop_s", "transport",
             "pacing_multiplier", "default_seed", "encoder", "reliability",
             "playout", "feedback", "controller", "forward_links",
             "reverse_link", "multihome_ratio")


def _merged(path: str, given: dict | None, defaults: dict) -> dict:
    given = given if given is not None else {}
    _check_keys(path, given, defaults.keys())
    out = dict(defaults)
    out.update(given)
    return out


def _validate_link(path: str, spec: dict) -> dict:
    _check_keys(path, spec, _LINK_KEYS)
    out = {
        "name": spec.get("name", "fwd"),
        "capacity_mbps": _number(path, spec, "capacity_mbps", lo=0.01,
                                 default=10.0),
        "delay_ms": _number(path, spec, "delay_ms", lo=0.0, default=15.0),
        "queue_kbytes": _number(path, spec, "queue_kbytes", lo=2.0,
                                default=3000.0),
        "random_loss": _number(path, spec, "random_loss", lo=0.0, hi=1.0,
                               default=0.0),
        "background_mbps": _number(path, spec, "background_mbps", lo=0.0,
                                   default=0.0),
        "available_until_s": spec.get("available_until_s"),
        "congestion_windows": spec.get("congestion_windows", []),
        "handovers": spec.get("handovers", []),
        "outages": spec.get("outages", []),
        "background_windows": spec.get("background_windows", []),
        "congestion_episodes": spec.get("congestion_episodes"),
        "background_bursts": spec.get("background_bursts"),
    }
    _require(isinstance(out["name"], str) and out["name"],
             f"{path}.name", "must be a non-empty string")
    if out["available_until_s"] is not None:
        _require(_is_number(out["available_until_s"]),
                 f"{path}.available_until_s", "must be a number or null")
    for i, w in enumerate(out["congestion_windows"]):
        wp = f"{path}.congestion_windows[{i}]"
        _check_keys(wp, w, ("start_s", "end_s", "capacity_factor",
                            "extra_delay_ms"))
        _number(wp, w, "start_s", lo=0.0)
        _require(_is_number(w.get("end_s")) and w["end_s"] >= w["start_s"],
                 wp, "end_s must be a number >= start_s")
        _number(wp, w, "capacity_factor", lo=1e-9, hi=1.0)
        _number(wp, w, "extra_delay_ms", lo=0.0, default=0.0)
    for i, w in enumerate(out["handovers"]):
        wp = f"{path}.handovers[{i}]"
        _check_keys(wp, w, ("at_s", "duration_ms"))
        _number(wp, w, "at_s", lo=0.0)
        _number(wp, w, "duration_ms", lo=0.0)
    for i, w in enumerate(out["outages"]):
        wp = f"{path}.outages[{i}]"
        _check_keys(wp, w, ("start_s", "end_s"))
        _number(wp, w, "start_s", lo=0.0)
        _require(_is_number(w.get("end_s")) and w["end_s"] >= w["start_s"],
                 wp, "end_s must be a number >= start_s")
    for i, w in enumerate(out["background_windows"]):
        wp = f"{path}.background_windows[{i}]"
        _check_keys(wp, w, ("start_s", "end_s", "mbps"))
        _number(wp, w, "start_s", lo=0.0)
        _require(_is_number(w.get("end_s")) and w["end_s"] >= w["start_s"],
                 wp, "end_s must be a number >= start_s")
        _number(wp, w, "mbps", lo=0.0)
    ep = out["congestion_episodes"]
    if ep is not None:
        epp = f"{path}.congestion_episodes"
        _check_keys(epp, ep, _EPISODE_KEYS)
        count = _number(epp, ep, "count", lo=1)
        _require(isinstance(count, int), f"{epp}.count", "must be an integer")
        fmin = _number(epp, ep, "factor_min", lo=1e-9, hi=1.0)
        fmax = _number(epp, ep, "factor_max", lo=1e-9, hi=1.0)
        _require(fmax >= fmin, epp, "factor_max must be >= factor_min")
        dmin = _number(epp, ep, "duration_min_s", lo=0.0)
        dmax = _number(epp, ep, "duration_max_s", lo=0.0)
        _require(dmax >= dmin, epp, "duration_max_s must be >= duration_min_s")
        r0 = _number(epp, ep, "region_start_s", lo=0.0)
        r1 = _number(epp, ep, "region_end_s", lo=0.0)
        _require(r1 > r0, epp, "region_end_s must exceed region_start_s")
        _number(epp, ep, "extra_delay_ms", lo=0.0, default=0.0)
    bb = out["background_bursts"]
    if bb is not None:
        bbp = f"{path}.background_bursts"
        _check_keys(bbp, bb, _BURST_KEYS)
        for lo_key, hi_key in (("on_min_s", "on_max_s"),
                               ("off_min_s", "off_max_s"),
                               ("mbps_min", "mbps_max")):
            lo = _number(bbp, bb, lo_key, lo=0.0)
            hi = _number(bbp, bb, hi_key, lo=0.0)
            _require(hi >= lo, bbp, f"{hi_key} must be >= {lo_key}")
        r0 = _number(bbp, bb, "region_start_s", lo=0.0, default=0.0)
        r1 = _number(bbp, bb, "region_end_s", lo=0.0)
        _require(r1 > r0, bbp, "region_end_s must exceed region_start_s")
    return out


def validate(scenario: dict) -> dict:
    """Validate, fill defaults, and return the normalized scenario dict."""
    _check_keys("", scenario, _TOP_KEYS)
    out: dict = {}
    name = scenario.get("name", "custom")
    _require(isinstance(name, str) and name, "name",
             "must be a non-empty string")
    out["name"] = name
    out["duration_s"] = _number("", scenario, "duration_s", lo=1e-3)
    stop = scenario.get("media_stop_s")
    if stop is not None:
        _require(_is_number(stop) and 0 < stop <= out["duration_s"],
                 "media_stop_s", "must be a number in (0, duration_s]")
    out["media_stop_s"] = stop
    transport = scenario.get("transport", "udp")
    _require(transport in TRANSPORTS, "transport",
             f"must be one of {TRANSPORTS}")
    out["transport"] = transport
    out["pacing_multiplier"] = _number("", scenario, "pacing_multiplier",
                                       lo=1.0, default=1.25)
    seed = scenario.get("default_seed", 1)
    _require(isinstance(seed, int) and not isinstance(seed, bool),
             "default_seed", "must be an integer")
    out["default_seed"] = seed

    enc = _merged("encoder", scenario.get("encoder"), _ENCODER_DEFAULTS)
    _number("encoder", enc, "fps", lo=1)
    for key in ("start_bitrate_bps", "min_bitrate_bps", "max_bitrate_bps"):
        _number("encoder", enc, key, lo=1)
    if enc["keyframe_interval_s"] is not None:
        _require(_is_number(enc["keyframe_interval_s"])
                 and enc["keyframe_interval_s"] > 0,
                 "encoder.keyframe_interval_s",
                 "must be a positive number or null")
    _number("encoder", enc, "keyframe_size_ratio", lo=1.0)
    _number("encoder", enc, "encode_latency_ms", lo=0.0)
    _number("encoder", enc, "size_jitter", lo=0.0, hi=0.9)
    out["encoder"] = enc

    rel = _merged("reliability", scenario.get("reliability"),
                  _RELIABILITY_DEFAULTS)
    _boolean("reliability", rel, "nack_enabled", rel["nack_enabled"])
    _boolean("reliability", rel, "fec_enabled", rel["fec_enabled"])
    _number("reliability", rel, "fec_delta_group_size", lo=2)
    _number("reliability", rel, "fec_key_group_size", lo=2)
    _number("reliability", rel, "rtx_age_ms", lo=1)
    _number("reliability", rel, "rtx_bandwidth_fraction", lo=0.0, hi=1.0)
    _number("reliability", rel, "rtx_max_count", lo=0)
    out["reliability"] = rel

    play = _merged("playout", scenario.get("playout"), _PLAYOUT_DEFAULTS)
    _number("playout", play, "playout_delay_ms", lo=1)
    _number("playout", play, "max_stall_ms", lo=0)
    _number("playout", play, "rtx_wait_ms", lo=0)
    _number("playout", play, "decode_latency_ms", lo=0)
    _number("playout", play, "nack_interval_ms", lo=1)
    _number("playout", play, "nack_max_count", lo=0)
    _boolean("playout", play, "keyframe_request_enabled",
             play["keyframe_request_enabled"])
    _number("playout", play, "resync_backlog_frames", lo=1)
    out["playout"] = play

    fb = _merged("feedback", scenario.get("feedback"), _FEEDBACK_DEFAULTS)
    _number("feedback", fb, "twcc_period_ms", lo=1)
    _number("feedback", fb, "rr_period_ms", lo=1)
    _boolean("feedback", fb, "no_cost", fb["no_cost"])
    out["feedback"] = fb

    ctrl = _merged("controller", scenario.get("controller"),
                   _CONTROLLER_DEFAULTS)
    _require(ctrl["kind"] in CONTROLLER_KINDS, "controller.kind",
             f"must be one of {CONTROLLER_KINDS}")
    _number("controller", ctrl, "start_rate_bps", lo=1)
    if ctrl["kind"] == "scripted":
        script = ctrl.get("script")
        _require(isinstance(script, list) and script, "controller.script",
                 "scripted controller needs a non-empty [[t_s, bps], ...]")
        for i, step in enumerate(script):
            _require(isinstance(step, (list, tuple)) and len(step) == 2
                     and _is_number(step[0]) and _is_number(step[1]),
                     f"controller.script[{i}]", "must be [t_s, bps]")
    if ctrl.get("gcc") is not None:
        from .ratecontrol import GccConfig
        allowed = set(GccConfig.__dataclass_fields__)
        _check_keys("controller.gcc", ctrl["gcc"], allowed)
    out["controller"] = ctrl

    fwd = scenario.get("forward_links", [{}])
    _require(isinstance(fwd, list) and 1 <= len(fwd) <= 2, "forward_links",
             "must be a list of one or two link specs")
    out["forward_links"] = [
        _validate_link(f"forward_links[{i}]", spec)
        for i, spec in enumerate(fwd)
    ]
    names = [spec["name"] for spec in out["forward_links"]]
    _require(len(set(names)) == len(names), "forward_links",
             "link names must be unique")

    rev = scenario.get("reverse_link")
    if rev is None:
        base = out["forward_links"][0]
        rev = {
            "name": "rev",
            "capacity_mbps": base["capacity_mbps"] * REVERSE_CAPACITY_RATIO,
            "delay_ms": base["delay_ms"],
            "queue_kbytes": base["queue_kbytes"],
        }
    out["reverse_link"] = _validate_link("reverse_link", rev)

    ratio = _number("", scenario, "multihome_ratio", lo=0.0, hi=1.0,
                    default=0.5)
    out["multihome_ratio"] = ratio
    return out


# ----------------------------------------------------------------- expansion


def _expand_episodes(spec: dict, stream) -> list[CongestionWindow]:
    count = int(spec["count"])
    r0, r1 = spec["region_start_s"], spec["region_end_s"]
    block = (r1 - r0) / count
    extra_us = ms_to_us(spec.get("extra_delay_ms", 0.0))
    windows = []
    for i in range(count):
        duration = stream.uniform(spec["duration_min_s"],
                                  spec["duration_max_s"])
        lo = r0 + i * block
        hi = max(lo, lo + block - duration)
        start = stream.uniform(lo, hi)
        factor = stream.uniform(spec["factor_min"], spec["factor_max"])
        windows.append(CongestionWindow(
            start=s_to_us(start), end=s_to_us(start + duration),
            capacity_factor=factor, extra_delay_us=extra_us))
    return windows


def _expand_bursts(spec: dict, stream) -> list[BackgroundWindow]:
    t = spec.get("region_start_s", 0.0)
    end = spec["region_end_s"]
    windows = []
    while True:
        t += stream.uniform(spec["off_min_s"], spec["off_max_s"])
        on = stream.uniform(spec["on_min_s"], spec["on_max_s"])
        if t + on > end:
            break
        mbps = stream.uniform(spec["mbps_min"], spec["mbps_max"])
        windows.append(BackgroundWindow(
            start=s_to_us(t), end=s_to_us(t + on),
            bps=int(mbps * 1e6)))
        t += on
    return windows


def build_link_profile(spec: dict, engine: Engine) -> LinkProfile:
    """Resolve one validated link spec into a concrete LinkProfile, expanding
    stochastic processes from streams named after the link (so the channel
    realization is independent of everything else that consumes randomness)."""
    congestion = [
        CongestionWindow(start=s_to_us(w["start_s"]), end=s_to_us(w["end_s"]),
                         capacity_factor=w["capacity_factor"],
                         extra_delay_us=ms_to_us(w.get("extra_delay_ms", 0.0)))
        for w in spec["congestion_windows"]
    ]
    if spec["congestion_episodes"] is not None:
        stream = engine.stream(f"link.{spec['name']}.episodes")
        congestion.extend(_expand_episodes(spec["congestion_episodes"],
                                           stream))
    background = [
        BackgroundWindow(start=s_to_us(w["start_s"]), end=s_to_us(w["end_s"]),
                         bps=int(w["mbps"] * 1e6))
        for w in spec["background_windows"]
    ]
    if spec["background_bursts"] is not None:
        stream = engine.stream(f"link.{spec['name']}.bursts")
        background.extend(_expand_bursts(spec["background_bursts"], stream))
    pauses = [
        PauseWindow(start=s_to_us(w["at_s"]),
                    end=s_to_us(w["at_s"]) + ms_to_us(w["duration_ms"]))
        for w in spec["handovers"]
    ]
    outages = [
        OutageWindow(start=s_to_us(w["start_s"]), end=s_to_us(w["end_s"]))
        for w in spec["outages"]
    ]
    profile = LinkProfile(
        name=spec["name"],
        capacity_bps=int(spec["capacity_mbps"] * 1e6),
        delay_us=ms_to_us(spec["delay_ms"]),
        queue_limit_bytes=int(spec["queue_kbytes"] * 1000),
        random_loss=spec["random_loss"],
        background_bps=int(spec["background_mbps"] * 1e6),
        available_until=(None if spec["available_until_s"] is None
                         else s_to_us(spec["available_until_s"])),
        congestion=congestion,
        pauses=pauses,
        outages=outages,
        background=background,
    )
    profile.validate()
    return profile


# ------------------------------------------------------------------- presets


def _easy() -> dict:
    return {
        "name": "easy",
        "duration_s": 300,
        "forward_links": [{
            "name": "fwd",
            "capacity_mbps": 11.0,
            "delay_ms": 15.0,
            "queue_kbytes": 1500.0,
            "random_loss": 0.0005,
        }],
    }


def _moderate() -> dict:
    return {
        "name": "moderate",
        "duration_s": 600,
        "forward_links": [{
            "name": "fwd",
            "capacity_mbps": 12.0,
            "delay_ms": 20.0,
            "queue_kbytes": 400.0,
            "random_loss": 0.002,
            "congestion_episodes": {
                "count": 6,
                "factor_min": 0.1,
                "factor_max": 0.5,
                "duration_min_s": 2.0,
                "duration_max_s": 20.0,
                "region_start_s": 30.0,
                "region_end_s": 570.0,
            },
            "background_bursts": {
                "on_min_s": 2.5,
                "on_max_s": 4.5,
                "off_min_s": 2.5,
                "off_max_s": 5.0,
                "mbps_min": 8.5,
                "mbps_max": 10.0,
                "region_start_s": 0.0,
                "region_end_s": 600.0,
            },
        }],
    }


def _hard() -> dict:
    return {
        "name": "hard",
        "duration_s": 300,
        "forward_links": [{
            "name": "fwd",
            "capacity_mbps": 10.0,
            "delay_ms": 25.0,
            "queue_kbytes": 1000.0,
            "random_loss": 0.01,
            "outages": [
                {"start_s": 60.0, "end_s": 75.0},
                {"start_s": 150.0, "end_s": 168.0},
                {"start_s": 240.0, "end_s": 252.0},
            ],
            "congestion_episodes": {
                "count": 8,
                "factor_min": 0.05,
                "factor_max": 0.35,
                "duration_min_s": 3.0,
                "duration_max_s": 15.0,
                "region_start_s": 10.0,
                "region_end_s": 290.0,
                "extra_delay_ms": 30.0,
            },
        }],
        "reverse_link": {
            "name": "rev",
            "capacity_mbps": 30.0,
            "delay_ms": 25.0,
            "queue_kbytes": 1000.0,
            "random_loss": 0.01,
            "outages": [
                {"start_s": 60.0, "end_s": 75.0},
                {"start_s": 150.0, "end_s": 168.0},
                {"start_s": 240.0, "end_s": 252.0},
            ],
        },
    }


def _congested_channel() -> dict:
    """Shared channel for the transport/reliability comparison presets.

    The whole family runs a fixed-rate sender so that the only thing
    varying between arms is the transport or repair mechanism itself;
    an adaptive controller would react to each arm differently and
    confound the comparison. The random-loss floor gives retransmission
    something recoverable to repair, the episodes add queue pressure.
    """
    return {
        "duration_s": 300,
        "controller": {"kind": "fixed", "start_rate_bps": 4_000_000},
        "forward_links": [{
            "name": "fwd",
            "capacity_mbps": 6.0,
            "delay_ms": 25.0,
            "queue_kbytes": 200.0,
            "random_loss": 0.02,
            "congestion_episodes": {
                "count": 10,
                "factor_min": 0.5,
                "factor_max": 0.75,
                "duration_min_s": 2.0,
                "duration_max_s": 6.0,
                "region_start_s": 20.0,
                "region_end_s": 280.0,
            },
        }],
        "reverse_link": {
            "name": "rev",
            "capacity_mbps": 18.0,
            "delay_ms": 25.0,
            "queue_kbytes": 600.0,
            "random_loss": 0.002,
        },
    }


def _udp_vs_tcp_congested() -> dict:
    out = _congested_channel()
    out["name"] = "udp_vs_tcp_congested"
    out["transport"] = "udp"   # the TCP arm runs with --transport tcp
    out["reliability"] = {"nack_enabled": False}
    return out


def _congested_plain() -> dict:
    out = _congested_channel()
    out["name"] = "congested_plain"
    out["reliability"] = {"nack_enabled": False}
    return out


def _congested_nack() -> dict:
    out = _congested_channel()
    out["name"] = "congested_nack"
    out["reliability"] = {"nack_enabled": True}
    return out


def _congested_hnack() -> dict:
    # Hard NACK: double the per-seq request budget, halve the request
    # interval, and double the sender-side retransmission cap.
    out = _congested_channel()
    out["name"] = "congested_hnack"
    out["reliability"] = {"nack_enabled": True, "rtx_max_count": 20}
    out["playout"] = {"nack_interval_ms": 10, "nack_max_count": 20}
    return out


def _fec_channel() -> dict:
    return {
        "duration_s": 120,
        "media_stop_s": 118,
        "encoder": {"keyframe_interval_s": 2.0},
        "controller": {"kind": "fixed", "start_rate_bps": 4_000_000},
        "forward_links": [{
            "name": "fwd",
            "capacity_mbps": 8.0,
            "delay_ms": 80.0,
            "queue_kbytes": 500.0,
            "random_loss": 0.03,
        }],
    }


def _fec_off() -> dict:
    out = _fec_channel()
    out["name"] = "fec_off"
    out["reliability"] = {"nack_enabled": False, "fec_enabled": False}
    return out


def _fec_on() -> dict:
    out = _fec_channel()
    out["name"] = "fec_on"
    out["reliability"] = {"nack_enabled": False, "fec_enabled": True}
    return out


def _multihome_reorder() -> dict:
    return {
        "name": "multihome_reorder",
        "duration_s": 60,
        "media_stop_s": 58,
        "controller": {"kind": "fixed", "start_rate_bps": 4_000_000},
        "forward_links": [
            {"name": "fast", "capacity_mbps": 8.0, "delay_ms": 10.0,
             "queue_kbytes": 500.0},
            {"name": "slow", "capacity_mbps": 8.0, "delay_ms": 45.0,
             "queue_kbytes": 500.0},
        ],
        "reverse_link": {"name": "rev", "capacity_mbps": 24.0,
                         "delay_ms": 10.0, "queue_kbytes": 500.0},
        "multihome_ratio": 0.5,
    }


def _multihome_rev() -> dict:
    return {
        "name": "multihome_rev",
        "duration_s": 300,
        "forward_links": [
            {"name": "wifi", "capacity_mbps": 25.0, "delay_ms": 8.0,
             "queue_kbytes": 1000.0, "random_loss": 0.002,
             "available_until_s": 210.0},
            {"name": "lte", "capacity_mbps": 12.0, "delay_ms": 30.0,
             "queue_kbytes": 1500.0, "random_loss": 0.004,
             "handovers": [{"at_s": 45.0, "duration_ms": 300.0},
                           {"at_s": 135.0, "duration_ms": 300.0},
                           {"at_s": 225.0, "duration_ms": 300.0}]},
        ],
        "reverse_link": {"name": "rev", "capacity_mbps": 30.0,
                         "delay_ms": 12.0, "queue_kbytes": 1000.0},
        "multihome_ratio": 0.5,
    }


def _rev_like() -> dict:
    # Docking-run envelope: strong near shore, roughly halving further out,
    # with periodic cell handovers.
    return {
        "name": "rev_like",
        "duration_s": 300,
        "forward_links": [{
            "name": "fwd",
            "capacity_mbps": 50.0,
            "delay_ms": 20.0,
            "queue_kbytes": 2000.0,
            "random_loss": 0.002,
            "congestion_windows": [
                {"start_s": 60.0, "end_s": 300.0, "capacity_factor": 0.5},
            ],
            "handovers": [{"at_s": 50.0, "duration_ms": 250.0},
                          {"at_s": 110.0, "duration_ms": 250.0},
                          {"at_s": 170.0, "duration_ms": 250.0},
                          {"at_s": 230.0, "duration_ms": 250.0}],
        }],
    }


def _dit_like() -> dict:
    return {
        "name": "dit_like",
        "duration_s": 300,
        "forward_links": [{
            "name": "fwd",
            "capacity_mbps": 30.0,
            "delay_ms": 25.0,
            "queue_kbytes": 2000.0,
            "random_loss": 0.004,
            "congestion_episodes": {
                "count": 12,
                "factor_min": 0.33,
                "factor_max": 1.0,
                "duration_min_s": 5.0,
                "duration_max_s": 20.0,
                "region_start_s": 5.0,
                "region_end_s": 295.0,
            },
        }],
    }


def _downlink_3to1() -> dict:
    return {
        "name": "downlink_3to1",
        "duration_s": 120,
        "forward_links": [{
            "name": "down",
            "capacity_mbps": 30.0,
            "delay_ms": 20.0,
            "queue_kbytes": 2000.0,
            "random_loss": 0.001,
        }],
        "reverse_link": {
            "name": "up",
            "capacity_mbps": 10.0,
            "delay_ms": 20.0,
            "queue_kbytes": 1000.0,
            "random_loss": 0.001,
        },
    }


_PRESET_BUILDERS = {
    "easy": _easy,
    "moderate": _moderate,
    "hard": _hard,
    "udp_vs_tcp_congested": _udp_vs_tcp_congested,
    "congested_plain": _congested_plain,
    "congested_nack": _congested_nack,
    "congested_hnack": _congested_hnack,
    "fec_off": _fec_off,
    "fec_on": _fec_on,
    "multihome_reorder": _multihome_reorder,
    "multihome_rev": _multihome_rev,
    "rev_like": _rev_like,
    "dit_like": _dit_like,
    "downlink_3to1": _downlink_3to1,
}


def preset_names() -> list[str]:
    return list(_PRESET_BUILDERS)


def load(name_or_path: str) -> dict:
    """Load and validate a preset by name or a scenario file by path."""
    builder = _PRESET_BUILDERS.get(name_or_path)
    if builder is not None:
        return validate(builder())
    try:
        with open(name_or_path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(
            f"unknown preset or missing scenario file: {name_or_path!r} "
            f"(presets: {', '.join(preset_names())})") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"scenario file {name_or_path!r}: {exc}") from None
    return validate(raw)


def preset_table() -> dict:
    """Machine-readable parameter table of every preset (validated form)."""
    return {name: validate(builder())
            for name, builder in _PRESET_BUILDERS.items()}


def export(scenario: dict) -> str:
    """Canonical JSON text of a validated scenario."""
    return json.dumps(validate(copy.deepcopy(scenario)), indent=2,
                      sort_keys=True)


def schema() -> dict:
    """Machine-readable description of the scenario format: every accepted
    key by section, the defaults that fill omitted ones, and the closed
    enumerations."""
    return {
        "top_level_keys": list(_TOP_KEYS),
        "transports": list(TRANSPORTS),
        "controller_kinds": list(CONTROLLER_KINDS),
        "defaults": {
            "encoder": dict(_ENCODER_DEFAULTS),
            "reliability": dict(_RELIABILITY_DEFAULTS),
            "playout": dict(_PLAYOUT_DEFAULTS),
            "feedback": dict(_FEEDBACK_DEFAULTS),
            "controller": dict(_CONTROLLER_DEFAULTS),
            "pacing_multiplier": 1.25,
            "multihome_ratio": 0.5,
            "transport": "udp",
            "default_seed": 1,
        },
        "link_keys": list(_LINK_KEYS),
        "congestion_episode_keys": list(_EPISODE_KEYS),
        "background_burst_keys": list(_BURST_KEYS),
        "reverse_link_default": (
            f"forward link with {REVERSE_CAPACITY_RATIO}x capacity"),
        "presets": preset_names(),
    }
