"""RTP-style packetization and the send-side pacer.

One frame becomes ceil(size / (mtu - header)) packets; every payload is full
size except possibly the last, and the marker bit is set on exactly the last
packet of the frame. The media timestamp runs on a 90 kHz clock with a random
per-session offset, so all packets of a frame share one timestamp and frames
1/fps apart differ by clock_hz/fps ticks.

Sequence numbering follows the split used by transport-wide feedback:
  stream_seq     16-bit wrapping media counter (fresh packets only)
  transport_seq  64-bit monotone counter stamped on *everything* handed to the
                 network, retransmissions and parity included
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

from .engine import ConfigError, Engine, RngStream, SimTime, US_PER_S

RTP_HEADER_BYTES = 20   # 12 base header + 8 extension
SEQ_SPACE = 1 << 16
TS_SPACE = 1 << 32


@dataclass
class RtpConfig:
    mtu: int = 1_250
    pacing_multiplier: float = 1.25
    timestamp_clock_hz: int = 90_000

    def validate(self) -> None:
        if self.mtu <= RTP_HEADER_BYTES:
            raise ConfigError(f"rtp.mtu must exceed the {RTP_HEADER_BYTES}-byte header")
        if self.pacing_multiplier <= 0:
            raise ConfigError("rtp.pacing_multiplier must be > 0")
        if self.timestamp_clock_hz <= 0:
            raise ConfigError("rtp.timestamp_clock_hz must be > 0")


@dataclass(slots=True)
class RtpPacket:
    stream_seq: int                 # 16-bit wire counter (own space for FEC)
    rtp_timestamp: int
    frame_id: int
    frame_packet_index: int
    frame_packet_count: int
    payload_size: int
    marker: bool = False
    is_keyframe: bool = False
    is_retransmission: bool = False
    is_fec: bool = False
    fec_group_id: int | None = None
    fec_covered: tuple | None = None    # CoveredPacket refs on parity packets
    payload: bytes | None = None
    header_size: int = RTP_HEADER_BYTES
    transport_seq: int | None = None    # stamped at network handoff
    enqueue_time: SimTime = 0
    send_time: SimTime | None = None
    link_start: SimTime | None = None   # serialization start on the last link hop
    arrival_time: SimTime | None = None

    @property
    def wire_size(self) -> int:
        return self.payload_size + self.header_size


def rtp_timestamp_for(capture_time: SimTime, session_offset: int,
                      clock_hz: int = 90_000) -> int:
    return (session_offset + capture_time * clock_hz // US_PER_S) % TS_SPACE


class Packetizer:
    """Splits frames into packets. Aggregation is zero-latency: the caller
    invokes packetize() at the frame's encode-done time."""

    def __init__(self, config: RtpConfig, offset_rng: RngStream,
                 payload_rng: RngStream | None = None,
                 synthesize_payloads: bool = False):
        config.validate()
        self._config = config
        self.session_timestamp_offset = offset_rng.integer_uniform(0, TS_SPACE - 1)
        self._payload_rng = payload_rng
        self._synthesize = synthesize_payloads and payload_rng is not None
        self._next_ext_seq = 0  # unwrapped; wire value is ext % SEQ_SPACE

    @property
    def next_ext_seq(self) -> int:
        return self._next_ext_seq

    def packetize(self, frame) -> list[RtpPacket]:
        c = self._config
        chunk = c.mtu - RTP_HEADER_BYTES
        count = (frame.size + chunk - 1) // chunk
        ts = rtp_timestamp_for(frame.capture_time, self.session_timestamp_offset,
                               c.timestamp_clock_hz)
        packets = []
        remaining = frame.size
        for i in range(count):
            payload_size = chunk if remaining >= chunk else remaining
            remaining -= payload_size
            pkt = RtpPacket(
                stream_seq=self._next_ext_seq % SEQ_SPACE,
                rtp_timestamp=ts,
                frame_id=frame.frame_id,
                frame_packet_index=i,
                frame_packet_count=count,
                payload_size=payload_size,
                marker=(i == count - 1),
                is_keyframe=frame.is_keyframe,
                enqueue_time=frame.encode_done_time,
            )
            if self._synthesize:
                pkt.payload = self._payload_rng.getrandbytes(payload_size)
            self._next_ext_seq += 1
            packets.append(pkt)
        return packets


class Pacer:
    """Token-less pacer: packet i leaves at max(now, prev_release + bits_i/rate).

    The rate tracks pacing_multiplier x the current target bitrate so frame
    bursts drain faster than real time. Retransmissions jump to the front of
    the queue; control traffic never passes through the pacer at all.
    """

    def __init__(self, engine: Engine, rate_bps: int, send_fn):
        self._engine = engine
        self._rate = 0
        self.set_rate(rate_bps)
        self._send = send_fn
        self._queue: deque[RtpPacket] = deque()
        self._last_release: SimTime | None = None
        self._pending = None  # scheduled release event handle
        self.released = 0

    @property
    def rate_bps(self) -> int:
        return self._rate

    @property
    def backlog(self) -> int:
        return len(self._queue)

    def set_rate(self, rate_bps: int) -> None:
        if rate_bps <= 0:
            raise ConfigError(f"pacing rate must be > 0, got {rate_bps}")
        self._rate = int(rate_bps)

    def enqueue(self, packet: RtpPacket, front: bool = False) -> None:
        packet.enqueue_time = self._engine.clock
        if front:
            self._queue.appendleft(packet)
            if self._pending is not None:
                # A queue-jumper may be due earlier than the displaced head.
                due = self._due_for(packet)
                if due < self._pending.fire_time:
                    self._pending.cancel()
                    self._pending = self._engine.schedule(
                        due, "pacer-release", self._release)
        else:
            self._queue.append(packet)
        self._maybe_schedule()

    def _due_for(self, packet: RtpPacket) -> SimTime:
        if self._last_release is None:
            return self._engine.clock
        gap = packet.wire_size * 8 * US_PER_S // self._rate
        return max(self._engine.clock, self._last_release + gap)

    def _maybe_schedule(self) -> None:
        if self._pending is not None or not self._queue:
            return
        due = self._due_for(self._queue[0])
        self._pending = self._engine.schedule(due, "pacer-release", self._release)

    def _release(self) -> None:
        self._pending = None
        if not self._queue:
            return
        packet = self._queue.popleft()
        now = self._engine.clock
        packet.send_time = now
        self._last_release = now
        self.released += 1
        self._send(packet)
        self._maybe_schedule()
