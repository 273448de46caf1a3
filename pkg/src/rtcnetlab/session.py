"""One media session: source, packetization, reliability, channel, playout.

The session owns construction order and all the glue callbacks:

  source -> packetize -> ledger/announce -> FEC -> pacer -> transport_seq
  stamp -> route (single link / splitter / TCP pipe) -> receiver

and the control plane around it: transport-wide feedback and receiver
reports on the reverse link, sender reports on the forward link (through
the TCP pipe in TCP mode, which is exactly what inflates its RTT metric),
NACKs into the retransmission buffer, keyframe requests into the source.

Every stochastic process draws from an RNG stream named after its role, so
two sessions with the same seed see identical channel noise even when the
protocol configuration differs; same-seed A/B comparisons isolate the
protocol change.

Conservation counting lives here: packets_sent counts every media-plane
packet handed to the network, and the in-flight remainder at the end of
the run is derived from link and pipe internals (not from the identity
itself), so the summary identity is a real cross-check.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

from .engine import ConfigError, Engine, SimTime, ms_to_us, s_to_us
from .feedback import (KeyframeRequest, NackRequest, ReceiverReport,
                       SenderReport, TwccFeedback, TwccRecorder,
                       RtcpReceiverState, compute_rtt)
from .media import EncoderConfig, VideoSource
from .metrics import MetricsRecorder, build_summary
from .network import (DROP_RANGE, Link, MultihomeSplitter, TcpAck,
                      TcpSegment, TcpTransport)
from .ratecontrol import (ExternalRateController, FixedRateController,
                          GccConfig, GccController, ScriptedRateController)
from .receiver import FrameLedger, LedgerEntry, PlayoutConfig, Receiver
from .reliability import FecEncoder, ReliabilityConfig, RetransmissionBuffer
from .rtp import Packetizer, RtpConfig, RtpPacket, Pacer
from .scenario import build_link_profile, validate

DEFAULT_RTT_ESTIMATE_US = 100_000   # until the first receiver report echoes


def make_controller(spec: dict):
    kind = spec["kind"]
    start = int(spec["start_rate_bps"])
    if kind == "gcc":
        overrides = dict(spec.get("gcc") or {})
        overrides.setdefault("start_bps", start)
        config = dataclasses.replace(GccConfig(), **overrides)
        return GccController(config)
    if kind == "fixed":
        return FixedRateController(start)
    if kind == "scripted":
        return ScriptedRateController(spec["script"], start)
    if kind == "bridge":
        return ExternalRateController(start)
    raise ConfigError(f"unknown controller kind {kind!r}")


@dataclass
class RunOutput:
    rows: list
    summary: dict
    scenario: dict | None = None


class Session:
    """Wires one sender/receiver pair over the scenario's channel."""

    def __init__(self, engine: Engine, scenario: dict):
        self.engine = engine
        self.scenario = scenario
        self.transport = scenario["transport"]

        enc = scenario["encoder"]
        ctrl_spec = scenario["controller"]
        self.controller = make_controller(ctrl_spec)
        self.controller.on_rate_change = self._on_rate_change

        start_rate = int(self.controller.target_bps)
        interval = enc["keyframe_interval_s"]
        self._encoder_config = EncoderConfig(
            fps=int(enc["fps"]),
            start_bitrate_bps=min(max(start_rate, int(enc["min_bitrate_bps"])),
                                  int(enc["max_bitrate_bps"])),
            min_bitrate_bps=int(enc["min_bitrate_bps"]),
            max_bitrate_bps=int(enc["max_bitrate_bps"]),
            keyframe_interval=(None if interval is None
                               else max(1, round(interval * enc["fps"]))),
            keyframe_ratio=enc["keyframe_size_ratio"],
            encode_latency_us=ms_to_us(enc["encode_latency_ms"]),
            bitrate_jitter=enc["size_jitter"],
        )

        rel = scenario["reliability"]
        self._reliability_config = ReliabilityConfig(
            nack_enabled=rel["nack_enabled"],
            fec_enabled=rel["fec_enabled"],
            fec_group_delta=int(rel["fec_delta_group_size"]),
            fec_group_key=int(rel["fec_key_group_size"]),
            rtx_age_ms=int(rel["rtx_age_ms"]),
            rtx_bandwidth_fraction=rel["rtx_bandwidth_fraction"],
            rtx_max_count=int(rel["rtx_max_count"]),
        )

        play = scenario["playout"]
        self._playout_config = PlayoutConfig(
            playout_delay_ms=int(play["playout_delay_ms"]),
            max_stall_ms=int(play["max_stall_ms"]),
            rtx_wait_ms=int(play["rtx_wait_ms"]),
            decode_latency_ms=int(play["decode_latency_ms"]),
            nack_enabled=rel["nack_enabled"],
            nack_interval_ms=int(play["nack_interval_ms"]),
            nack_max_count=int(play["nack_max_count"]),
            keyframe_request_enabled=play["keyframe_request_enabled"],
            resync_backlog_frames=int(play["resync_backlog_frames"]),
            record_releases=True,
        )

        self._rtp_config = RtpConfig(
            pacing_multiplier=scenario["pacing_multiplier"])
        self.ledger = FrameLedger()
        self.receiver = Receiver(engine, self._playout_config, self.ledger)
        self.recorder = MetricsRecorder(
            engine, scenario["duration_s"], self.receiver.stats,
            lambda: self.controller.target_bps)

        self.packetizer = Packetizer(self._rtp_config,
                                     engine.stream("rtp.timestamp_offset"))
        self.rtx_buffer = RetransmissionBuffer(self._reliability_config)
        self.fec = (FecEncoder(self._reliability_config)
                    if self._reliability_config.fec_enabled else None)
        self.pacer = Pacer(
            engine,
            max(1, int(start_rate * self._rtp_config.pacing_multiplier)),
            self._on_paced_packet)

        # channel -------------------------------------------------------------
        fwd_specs = scenario["forward_links"]
        if self.transport == "tcp" and len(fwd_specs) > 1:
            raise ConfigError("tcp transport does not support multihoming")
        self.forward_links = [
            Link(engine, build_link_profile(spec, engine),
                 engine.stream(f"link.{spec['name']}.loss"),
                 self._on_forward_deliver, self._on_forward_drop)
            for spec in fwd_specs
        ]
        rev_spec = scenario["reverse_link"]
        self.reverse_link = Link(
            engine, build_link_profile(rev_spec, engine),
            engine.stream(f"link.{rev_spec['name']}.loss"),
            self._on_reverse_deliver, self._on_reverse_drop)
        self.splitter = (MultihomeSplitter(self.forward_links[0],
                                           self.forward_links[1],
                                           scenario["multihome_ratio"])
                         if len(self.forward_links) == 2 else None)
        self.tcp = (TcpTransport(engine, self.forward_links[0],
                                 self.reverse_link, self._on_transport_deliver)
                    if self.transport == "tcp" else None)

        # sender state ---------------------------------------------------------
        self.source = VideoSource(engine, self._encoder_config, self._on_frame,
                                  engine.stream("media.size_jitter"))
        self.twcc_recorder = TwccRecorder()
        self.rtcp_state = RtcpReceiverState()
        self._next_transport_seq = 0
        self._rtt_estimate_us: SimTime = DEFAULT_RTT_ESTIMATE_US
        self._media_stop_us = (None if scenario["media_stop_s"] is None
                               else s_to_us(scenario["media_stop_s"]))
        self._no_cost_feedback = scenario["feedback"]["no_cost"]

        # control-plane conservation offsets
        self._sr_sent = 0
        self._sr_delivered = 0
        self._sr_dropped = 0
        self.control_reverse_sent = 0
        self.control_reverse_dropped = 0
        self.tcp_segment_drops = 0

        self.receiver.send_nack = self._on_receiver_nack
        self.receiver.send_keyframe_request = self._on_receiver_keyframe_request
        self.receiver.on_frame_played = self.recorder.note_frame_played

        self._twcc_period_us = ms_to_us(scenario["feedback"]["twcc_period_ms"])
        self._rr_period_us = ms_to_us(scenario["feedback"]["rr_period_ms"])
        engine.schedule(self._twcc_period_us, "twcc-timer", self._twcc_tick)
        engine.schedule(self._rr_period_us, "rr-timer", self._rr_tick)
        engine.schedule(max(1, self._rr_period_us // 2), "sr-timer",
                        self._sr_tick)
        if isinstance(self.controller, ScriptedRateController):
            for at_s, _ in ctrl_spec["script"]:
                engine.schedule(s_to_us(at_s), "controller-script",
                                self._scripted_tick)

        self.source.start()

    # ------------------------------------------------------------ sender path

    def _on_frame(self, frame) -> None:
        if self._media_stop_us is not None and \
                frame.capture_time >= self._media_stop_us:
            return
        first_ext = self.packetizer.next_ext_seq
        packets = self.packetizer.packetize(frame)
        self.ledger.add(LedgerEntry(
            frame_id=frame.frame_id,
            capture_time=frame.capture_time,
            encode_done_time=frame.encode_done_time,
            first_ext_seq=first_ext,
            packet_count=len(packets),
            is_keyframe=frame.is_keyframe,
            frame_bytes=frame.size,
        ))
        self.receiver.on_frame_encoded(frame.frame_id)
        now = self.engine.clock
        for i, pkt in enumerate(packets):
            self.rtx_buffer.store(pkt, first_ext + i, now)
        send_list = (self.fec.protect_frame(packets)
                     if self.fec is not None else packets)
        for pkt in send_list:
            self.pacer.enqueue(pkt)

    def _on_paced_packet(self, pkt: RtpPacket) -> None:
        now = self.engine.clock
        pkt.transport_seq = self._next_transport_seq
        self._next_transport_seq += 1
        self.controller.on_packet_sent(pkt.transport_seq, now, pkt.wire_size)
        self.recorder.note_sent(pkt)
        self._route_forward(pkt, now)

    def _route_forward(self, obj, now: SimTime) -> None:
        if self.tcp is not None:
            self.tcp.send(obj, now)
            return
        if self.splitter is not None:
            link = self.splitter.route(obj, now)
            if link is None:
                self._drop_forward(obj, DROP_RANGE, now)
                return
            link.transmit(obj, now)
            return
        self.forward_links[0].transmit(obj, now)

    def _on_rate_change(self, rate_bps: int, now: SimTime) -> None:
        self.source.set_target_bitrate(rate_bps)
        self.pacer.set_rate(
            max(1, int(rate_bps * self._rtp_config.pacing_multiplier)))

    def _scripted_tick(self) -> None:
        self.controller.tick(self.engine.clock)

    # ---------------------------------------------------------- control plane

    def _sr_tick(self) -> None:
        now = self.engine.clock
        self._sr_sent += 1
        self._route_forward(SenderReport(send_time=now), now)
        self.engine.schedule_in(self._rr_period_us, "sr-timer", self._sr_tick)

    def _rr_tick(self) -> None:
        now = self.engine.clock
        self._send_reverse(self.rtcp_state.build_report(now), now)
        self.engine.schedule_in(self._rr_period_us, "rr-timer", self._rr_tick)

    def _twcc_tick(self) -> None:
        now = self.engine.clock
        feedback = self.twcc_recorder.build(now)
        if feedback is not None:
            self._send_reverse(feedback, now)
        self.engine.schedule_in(self._twcc_period_us, "twcc-timer",
                                self._twcc_tick)

    def _send_reverse(self, obj, now: SimTime) -> None:
        self.control_reverse_sent += 1
        if self._no_cost_feedback:
            self.engine.schedule(now, "feedback-nocost",
                                 self._on_reverse_deliver, obj, now)
            return
        self.reverse_link.transmit(obj, now)

    def _on_receiver_nack(self, seqs16) -> None:
        self._send_reverse(NackRequest(tuple(seqs16)), self.engine.clock)

    def _on_receiver_keyframe_request(self) -> None:
        self._send_reverse(KeyframeRequest(), self.engine.clock)

    # -------------------------------------------------------------- deliveries

    def _on_forward_deliver(self, obj, now: SimTime) -> None:
        if isinstance(obj, TcpSegment):
            self.tcp.on_segment_arrival(obj, now)
            return
        self._on_transport_deliver(obj, now)

    def _on_transport_deliver(self, obj, now: SimTime) -> None:
        if isinstance(obj, SenderReport):
            self._sr_delivered += 1
            self.rtcp_state.on_sender_report(obj, now)
            return
        pkt: RtpPacket = obj
        if pkt.transport_seq is not None:
            self.twcc_recorder.note(pkt.transport_seq, now)
        ext = self.receiver.on_packet(pkt)
        self.recorder.note_delivered(pkt, first_time=ext is not None)
        if ext is not None:
            self.rtcp_state.on_unique_media(
                ext, pkt.rtp_timestamp, now,
                self._rtp_config.timestamp_clock_hz)

    def _on_forward_drop(self, obj, reason: str, now: SimTime) -> None:
        if isinstance(obj, TcpSegment):
            self.tcp_segment_drops += 1
            return
        self._drop_forward(obj, reason, now)

    def _drop_forward(self, obj, reason: str, now: SimTime) -> None:
        if isinstance(obj, SenderReport):
            self._sr_dropped += 1
            return
        self.recorder.note_drop(reason)

    def _on_reverse_deliver(self, obj, now: SimTime) -> None:
        if isinstance(obj, TcpAck):
            self.tcp.on_ack_arrival(obj, now)
            return
        if isinstance(obj, TwccFeedback):
            self.controller.on_twcc_feedback(obj, now)
            return
        if isinstance(obj, ReceiverReport):
            rtt = compute_rtt(obj, now)
            if rtt is not None:
                self._rtt_estimate_us = rtt
                self.controller.on_rtt_sample(rtt)
                self.recorder.note_rtt_sample(rtt)
            self.controller.on_receiver_report(obj.fraction_lost, now)
            return
        if isinstance(obj, NackRequest):
            copies = self.rtx_buffer.handle_nack(
                obj.seqs, now, self._rtt_estimate_us,
                int(self.controller.target_bps))
            for pkt in copies:
                self.pacer.enqueue(pkt, front=True)
            return
        if isinstance(obj, KeyframeRequest):
            self.source.force_keyframe()
            return
        raise ConfigError(
            f"unexpected object on the reverse link: {type(obj).__name__}")

    def _on_reverse_drop(self, obj, reason: str, now: SimTime) -> None:
        self.control_reverse_dropped += 1
        if isinstance(obj, TwccFeedback):
            # The arrival facts are not lost with the report; they fold into
            # the next one (standing in for the overlap redundancy real
            # transport-wide feedback uses).
            self.twcc_recorder.restore(obj)

    # ---------------------------------------------------------------- results

    def in_flight_at_end(self) -> int:
        """Media-plane objects still inside the channel, from channel state."""
        if self.tcp is not None:
            pipe = self.tcp.accepted - self.tcp.released
            control = self._sr_sent - self._sr_delivered
            return pipe - control
        total = sum(link.stats.in_flight for link in self.forward_links)
        control = self._sr_sent - self._sr_delivered - self._sr_dropped
        return total - control

    def run(self) -> RunOutput:
        end_s = math.ceil(self.scenario["duration_s"])
        self.engine.run_until(s_to_us(end_s))
        return RunOutput(rows=self.recorder.rows,
                         summary=self.run_summary_only(),
                         scenario=self.scenario)

    def run_summary_only(self) -> dict:
        """Summarize the session as simulated so far (caller drives time)."""
        extra = {
            "source_frames": self.source.frames_emitted,
            "control": {
                "sender_reports_sent": self._sr_sent,
                "sender_reports_delivered": self._sr_delivered,
                "reverse_sent": self.control_reverse_sent,
                "reverse_dropped": self.control_reverse_dropped,
            },
        }
        if self.tcp is not None:
            extra["tcp"] = {
                "retransmissions": self.tcp.retransmissions,
                "duplicates": self.tcp.duplicates,
                "segment_drops": self.tcp_segment_drops,
                "srtt_ms": (None if self.tcp.srtt_us is None
                            else self.tcp.srtt_us / 1000.0),
            }
        if self.splitter is not None:
            extra["multihome"] = {
                "dropped_both_down": self.splitter.dropped_both_down,
                "per_link_delivered": {
                    link.profile.name: link.stats.delivered
                    for link in self.forward_links
                },
            }
        if self.fec is not None:
            extra["fec"] = {"parities_built": self.fec.parities_built}
        return build_summary(
            scenario=self.scenario,
            seed=self.engine.seed,
            transport=self.transport,
            controller_kind=self.scenario["controller"]["kind"],
            recorder=self.recorder,
            receiver_stats=self.receiver.stats,
            rtx_gate_stats=self.rtx_buffer.stats,
            in_flight_at_end=self.in_flight_at_end(),
            extra=extra,
        )


def run_scenario(scenario_or_name, *, seed: int | None = None,
                 duration_s: float | None = None,
                 controller_kind: str | None = None,
                 transport: str | None = None) -> RunOutput:
    """Load/normalize a scenario, apply overrides, run it to completion."""
    if isinstance(scenario_or_name, str):
        from .scenario import load
        scenario = load(scenario_or_name)
    else:
        scenario = validate(scenario_or_name)
    if duration_s is not None:
        scenario["duration_s"] = duration_s
        if scenario["media_stop_s"] is not None and \
                scenario["media_stop_s"] > duration_s:
            scenario["media_stop_s"] = duration_s
    if controller_kind is not None:
        scenario["controller"]["kind"] = controller_kind
        scenario = validate(scenario)
    if transport is not None:
        scenario["transport"] = transport
        scenario = validate(scenario)
    run_seed = scenario["default_seed"] if seed is None else seed
    engine = Engine(run_seed)
    session = Session(engine, scenario)
    return session.run()
