"""Per-second metrics rows, end-of-run summary, and their serializers.

The recorder schedules one sampler per second up front (so sampling order
relative to same-instant traffic events is fixed by insertion order) and
materializes one row per second: row t covers [t-1, t). Cumulative columns
never decrease; rate and latency columns are per-window.

Two byte meanings matter and are kept strictly apart:

  rx          every delivered byte on the media plane, headers included,
              retransmissions and parity included
  goodput     payload bytes of frames that actually played, credited once
              at the frame's resolve time

so rx - goodput is the overhead actually paid (headers, parity, repeats,
bytes of frames that never played). A lossless run with all frames played
satisfies rx == goodput + media headers + parity wire bytes exactly.

The summary carries the conservation counters; every packet handed to the
network ends in exactly one bucket:

  packets_sent == delivered + dropped(queue_overflow, random, out_of_range)
                  + in_flight_at_end
"""

from __future__ import annotations

import hashlib
import json
import math

from .engine import Engine, SimTime, s_to_us
from .network import DROP_QUEUE, DROP_RANDOM, DROP_RANGE

COLUMNS = (
    "t_s",
    "rx_rate_mbps",
    "rx_total_mbytes",
    "rtt_ms",
    "plr_window_pct",
    "plr_global_pct",
    "rtx_rate_global_pct",
    "goodput_mbps",
    "target_bitrate_mbps",
    "frames_played",
    "frames_skipped",
    "stall_ms",
    "latency_processing_ms",
    "latency_queuing_ms",
    "latency_transmission_ms",
    "latency_decoding_ms",
)

_INT_COLUMNS = frozenset(("t_s", "frames_played", "frames_skipped"))

# Conventional quality bands for end-to-end playout loss.
PLR_BAND_GOOD = "good"            # < 1 %
PLR_BAND_ACCEPTABLE = "acceptable"  # 1 - 3 %
PLR_BAND_POOR = "poor"            # > 3 %


def plr_band(playout_plr_pct: float) -> str:
    if playout_plr_pct < 1.0:
        return PLR_BAND_GOOD
    if playout_plr_pct <= 3.0:
        return PLR_BAND_ACCEPTABLE
    return PLR_BAND_POOR


def config_digest(scenario: dict) -> str:
    """Stable digest of a validated scenario (configuration provenance)."""
    text = json.dumps(scenario, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def percentile(values, fraction: float) -> float:
    if not values:
        return 0.0
    ordered = sorted(values)
    rank = max(0, math.ceil(fraction * len(ordered)) - 1)
    return float(ordered[rank])


class MetricsRecorder:
    """Accumulates counters from session hooks and emits per-second rows."""

    def __init__(self, engine: Engine, duration_s: float, receiver_stats,
                 target_bps_fn):
        self._engine = engine
        self._stats = receiver_stats
        self._target_bps_fn = target_bps_fn
        self.rows: list[dict] = []

        # cumulative counters -------------------------------------------------
        self.packets_sent = 0          # everything handed to the network
        self.media_packets_sent = 0
        self.rtx_packets_sent = 0
        self.fec_packets_sent = 0
        self.dropped = {r: 0 for r in (DROP_QUEUE, DROP_RANDOM, DROP_RANGE)}
        self.delivered = 0
        self.rx_wire_bytes = 0
        self.rx_media_payload_bytes = 0   # first-time media deliveries only
        self.rx_media_header_bytes = 0
        self.rx_rtx_wire_bytes = 0
        self.rx_fec_wire_bytes = 0
        self.rx_duplicate_wire_bytes = 0
        self.goodput_bytes = 0
        self.rtt_sample_count = 0
        self.reorder_inversions = 0    # transport_seq going backwards on arrival

        self._lat_sums_us = [0, 0, 0, 0]   # processing, queuing, tx, decoding
        self._lat_frames = 0

        # previous-window snapshot --------------------------------------------
        self._last_rtt_ms = 0.0
        self._win_rx_bytes = 0
        self._win_goodput_bytes = 0
        self._win_rtt_sum_ms = 0.0
        self._win_rtt_count = 0
        self._win_lat_sums_us = [0, 0, 0, 0]
        self._win_lat_frames = 0
        self._prev_expected = 0
        self._prev_lost = 0
        self._last_transport_seq = -1

        self.row_count = math.ceil(duration_s)
        for t in range(1, self.row_count + 1):
            engine.schedule(s_to_us(t), "metrics-sample", self._sample, t)

    # ------------------------------------------------------------------ hooks

    def note_sent(self, pkt) -> None:
        self.packets_sent += 1
        if pkt.is_fec:
            self.fec_packets_sent += 1
        elif pkt.is_retransmission:
            self.rtx_packets_sent += 1
        else:
            self.media_packets_sent += 1

    def note_drop(self, reason: str) -> None:
        self.dropped[reason] += 1

    def note_delivered(self, pkt, first_time: bool) -> None:
        self.delivered += 1
        wire = pkt.wire_size
        self.rx_wire_bytes += wire
        self._win_rx_bytes += wire
        if pkt.transport_seq is not None:
            if pkt.transport_seq < self._last_transport_seq:
                self.reorder_inversions += 1
            else:
                self._last_transport_seq = pkt.transport_seq
        if pkt.is_fec:
            self.rx_fec_wire_bytes += wire
            return
        if pkt.is_retransmission:
            self.rx_rtx_wire_bytes += wire
        if first_time:
            self.rx_media_payload_bytes += pkt.payload_size
            self.rx_media_header_bytes += pkt.header_size
        elif not pkt.is_retransmission:
            self.rx_duplicate_wire_bytes += wire

    def note_rtt_sample(self, rtt_us: SimTime) -> None:
        self.rtt_sample_count += 1
        ms = rtt_us / 1000.0
        self._last_rtt_ms = ms
        self._win_rtt_sum_ms += ms
        self._win_rtt_count += 1

    def note_frame_played(self, frame) -> None:
        self.goodput_bytes += frame.frame_bytes
        self._win_goodput_bytes += frame.frame_bytes
        comps = (frame.processing_us, frame.queuing_us,
                 frame.transmission_us, frame.decoding_us)
        for i, v in enumerate(comps):
            self._lat_sums_us[i] += v
            self._win_lat_sums_us[i] += v
        self._lat_frames += 1
        self._win_lat_frames += 1

    # --------------------------------------------------------------- sampling

    def _sample(self, t: int) -> None:
        stats = self._stats
        expected = stats.packets_expected
        lost = stats.packets_lost_at_playout
        win_expected = expected - self._prev_expected
        win_lost = lost - self._prev_lost
        self._prev_expected = expected
        self._prev_lost = lost

        if self._win_rtt_count:
            rtt_ms = self._win_rtt_sum_ms / self._win_rtt_count
        else:
            rtt_ms = self._last_rtt_ms
        if self._win_lat_frames:
            lat_ms = [s / self._win_lat_frames / 1000.0
                      for s in self._win_lat_sums_us]
        else:
            lat_ms = [0.0, 0.0, 0.0, 0.0]

        row = {
            "t_s": t,
            "rx_rate_mbps": self._win_rx_bytes * 8 / 1e6,
            "rx_total_mbytes": self.rx_wire_bytes / 1e6,
            "rtt_ms": rtt_ms,
            "plr_window_pct": (100.0 * win_lost / win_expected
                               if win_expected else 0.0),
            "plr_global_pct": (100.0 * lost / expected if expected else 0.0),
            "rtx_rate_global_pct": (
                100.0 * self.rtx_packets_sent / self.media_packets_sent
                if self.media_packets_sent else 0.0),
            "goodput_mbps": self._win_goodput_bytes * 8 / 1e6,
            "target_bitrate_mbps": self._target_bps_fn() / 1e6,
            "frames_played": stats.frames_played,
            "frames_skipped": stats.frames_skipped,
            "stall_ms": stats.stall_us / 1000.0,
            "latency_processing_ms": lat_ms[0],
            "latency_queuing_ms": lat_ms[1],
            "latency_transmission_ms": lat_ms[2],
            "latency_decoding_ms": lat_ms[3],
        }
        self.rows.append(row)
        self._win_rx_bytes = 0
        self._win_goodput_bytes = 0
        self._win_rtt_sum_ms = 0.0
        self._win_rtt_count = 0
        self._win_lat_sums_us = [0, 0, 0, 0]
        self._win_lat_frames = 0

    @property
    def last_rtt_ms(self) -> float:
        return self._last_rtt_ms

    # ---------------------------------------------------------------- summary

    def byte_breakdown(self) -> dict:
        return {
            "rx_wire_bytes": self.rx_wire_bytes,
            "rx_media_payload_bytes": self.rx_media_payload_bytes,
            "rx_media_header_bytes": self.rx_media_header_bytes,
            "rx_rtx_wire_bytes": self.rx_rtx_wire_bytes,
            "rx_fec_wire_bytes": self.rx_fec_wire_bytes,
            "rx_duplicate_wire_bytes": self.rx_duplicate_wire_bytes,
            "goodput_bytes": self.goodput_bytes,
        }

    def latency_means_ms(self) -> dict:
        if self._lat_frames == 0:
            zero = {"processing": 0.0, "queuing": 0.0, "transmission": 0.0,
                    "decoding": 0.0}
            return zero
        n = self._lat_frames * 1000.0
        return {
            "processing": self._lat_sums_us[0] / n,
            "queuing": self._lat_sums_us[1] / n,
            "transmission": self._lat_sums_us[2] / n,
            "decoding": self._lat_sums_us[3] / n,
        }

    def snapshot(self) -> dict:
        """Cumulative counters for callers that window them externally."""
        stats = self._stats
        return {
            "rx_wire_bytes": self.rx_wire_bytes,
            "goodput_bytes": self.goodput_bytes,
            "packets_expected": stats.packets_expected,
            "packets_lost_at_playout": stats.packets_lost_at_playout,
            "media_packets_sent": self.media_packets_sent,
            "rtx_packets_sent": self.rtx_packets_sent,
            "frames_played": stats.frames_played,
            "frames_skipped": stats.frames_skipped,
            "stall_us": stats.stall_us,
            "last_rtt_ms": self._last_rtt_ms,
            "jitter_placeholder": None,
        }


def build_summary(*, scenario: dict, seed: int, transport: str,
                  controller_kind: str, recorder: MetricsRecorder,
                  receiver_stats, rtx_gate_stats, in_flight_at_end: int,
                  extra: dict | None = None) -> dict:
    rows = recorder.rows
    expected = receiver_stats.packets_expected
    lost = receiver_stats.packets_lost_at_playout
    playout_plr_pct = 100.0 * lost / expected if expected else 0.0
    rtts = [r["rtt_ms"] for r in rows if r["rtt_ms"] > 0.0]
    conservation = {
        "packets_sent": recorder.packets_sent,
        "delivered": recorder.delivered,
        "dropped_queue_overflow": recorder.dropped[DROP_QUEUE],
        "dropped_random": recorder.dropped[DROP_RANDOM],
        "dropped_out_of_range": recorder.dropped[DROP_RANGE],
        "in_flight_at_end": in_flight_at_end,
    }
    conservation["identity_holds"] = (
        conservation["packets_sent"] ==
        conservation["delivered"]
        + conservation["dropped_queue_overflow"]
        + conservation["dropped_random"]
        + conservation["dropped_out_of_range"]
        + conservation["in_flight_at_end"])
    summary = {
        "scenario": scenario["name"],
        "seed": seed,
        "transport": transport,
        "controller": controller_kind,
        "duration_s": scenario["duration_s"],
        "config_digest": config_digest(scenario),
        "rows": len(rows),
        "aggregates": {
            "rx_rate_mbps_mean": _mean([r["rx_rate_mbps"] for r in rows]),
            "goodput_mbps_mean": _mean([r["goodput_mbps"] for r in rows]),
            "target_mbps_mean": _mean([r["target_bitrate_mbps"]
                                       for r in rows]),
            "target_mbps_p95": percentile([r["target_bitrate_mbps"]
                                           for r in rows], 0.95),
            "rtt_ms_mean": _mean(rtts),
            "rtt_ms_p95": percentile(rtts, 0.95),
            "playout_plr_pct": playout_plr_pct,
            "playout_plr_band": plr_band(playout_plr_pct),
            "rtx_rate_global_pct": (
                100.0 * recorder.rtx_packets_sent
                / recorder.media_packets_sent
                if recorder.media_packets_sent else 0.0),
            "rx_total_mbytes": recorder.rx_wire_bytes / 1e6,
            "goodput_total_mbytes": recorder.goodput_bytes / 1e6,
            "stall_ms_total": receiver_stats.stall_us / 1000.0,
            "frames_played": receiver_stats.frames_played,
            "frames_skipped": receiver_stats.frames_skipped,
            "latency_ms_mean": recorder.latency_means_ms(),
        },
        "playout": {
            "skip_reasons": dict(receiver_stats.skip_reasons),
            "repairs": receiver_stats.repairs,
            "duplicates": receiver_stats.duplicates,
            "keyframe_requests": receiver_stats.keyframe_requests,
        },
        "retransmission_gates": {
            "requested": rtx_gate_stats.requested,
            "granted": rtx_gate_stats.granted,
            "not_in_buffer": rtx_gate_stats.not_in_buffer,
            "within_rtt": rtx_gate_stats.within_rtt,
            "count_exhausted": rtx_gate_stats.count_exhausted,
            "budget_exceeded": rtx_gate_stats.budget_exceeded,
        },
        "bytes": recorder.byte_breakdown(),
        "conservation": conservation,
        "reorder_inversions": recorder.reorder_inversions,
    }
    if extra:
        summary.update(extra)
    return summary


def _mean(values) -> float:
    return sum(values) / len(values) if values else 0.0


def _format_cell(column: str, value) -> str:
    if column in _INT_COLUMNS:
        return str(int(value))
    return f"{value:.6f}"


def rows_to_csv(rows: list[dict]) -> str:
    lines = [",".join(COLUMNS)]
    for row in rows:
        lines.append(",".join(_format_cell(c, row[c]) for c in COLUMNS))
    return "\n".join(lines) + "\n"


def summary_to_json(summary: dict) -> str:
    return json.dumps(summary, indent=2, sort_keys=True) + "\n"


def compare_summaries(a: dict, b: dict) -> dict:
    """Numeric aggregate deltas (b minus a); antisymmetric by construction."""
    out = {
        "a": {"scenario": a["scenario"], "seed": a["seed"],
              "controller": a["controller"], "transport": a["transport"]},
        "b": {"scenario": b["scenario"], "seed": b["seed"],
              "controller": b["controller"], "transport": b["transport"]},
        "delta": {},
    }
    for key, va in a["aggregates"].items():
        vb = b["aggregates"].get(key)
        if isinstance(va, (int, float)) and isinstance(vb, (int, float)):
            out["delta"][key] = vb - va
    return out
