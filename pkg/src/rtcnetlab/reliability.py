"""Sender-side loss repair: retransmission buffer and single-parity FEC.

Retransmission requests pass four gates, in order: the packet must still be
in the buffer, must not have been retransmitted within the last RTT estimate,
must have retransmission attempts left, and the retransmission bytes of the
last second must stay under a fraction of the bandwidth estimate.

FEC is one XOR parity per group (payloads zero-padded to the longest member),
so exactly one missing member is recoverable byte-for-byte and two or more
are not. Keyframe packets form smaller groups than delta packets, and a group
never spans a frame boundary: partial groups are flushed when the frame ends.
Parity packets live in their own sequence space so a lost parity never trips
the receiver's media gap detector.
"""

from __future__ import annotations

import copy
from collections import OrderedDict, deque, namedtuple
from dataclasses import dataclass

from .engine import ConfigError, SimTime, US_PER_S
from .rtp import RtpPacket, SEQ_SPACE

RTX_WINDOW_US = US_PER_S  # budget gate window: the last second
BUFFER_SEQ_WINDOW = 10_000

CoveredPacket = namedtuple(
    "CoveredPacket",
    "stream_seq frame_id frame_packet_index frame_packet_count "
    "payload_size marker is_keyframe rtp_timestamp",
)


@dataclass
class ReliabilityConfig:
    nack_enabled: bool = True
    fec_enabled: bool = False
    fec_group_delta: int = 10
    fec_group_key: int = 4
    rtx_age_ms: int = 1_000
    rtx_bandwidth_fraction: float = 0.25
    rtx_max_count: int = 10

    def validate(self) -> None:
        if self.fec_group_delta < 1 or self.fec_group_key < 1:
            raise ConfigError("reliability FEC group sizes must be >= 1")
        if self.rtx_age_ms <= 0:
            raise ConfigError("reliability.rtx_age_ms must be > 0")
        if not (0.0 < self.rtx_bandwidth_fraction <= 1.0):
            raise ConfigError("reliability.rtx_bandwidth_fraction must be in (0, 1]")
        if self.rtx_max_count < 1:
            raise ConfigError("reliability.rtx_max_count must be >= 1")


def xor_payloads(payloads) -> bytes:
    """XOR byte strings together, zero-padding to the longest one."""
    size = 0
    acc = 0
    for p in payloads:
        if len(p) > size:
            size = len(p)
        acc ^= int.from_bytes(p, "little")
    return acc.to_bytes(size, "little")


@dataclass
class RtxGateStats:
    requested: int = 0
    granted: int = 0
    not_in_buffer: int = 0
    within_rtt: int = 0
    count_exhausted: int = 0
    budget_exceeded: int = 0


class _BufferEntry:
    __slots__ = ("packet", "stored_at", "last_rtx_at", "rtx_count")

    def __init__(self, packet: RtpPacket, stored_at: SimTime):
        self.packet = packet
        self.stored_at = stored_at
        self.last_rtx_at: SimTime | None = None
        self.rtx_count = 0


class RetransmissionBuffer:
    """Holds recently sent media packets, keyed by extended sequence number."""

    def __init__(self, config: ReliabilityConfig):
        config.validate()
        self._config = config
        self._entries: OrderedDict[int, _BufferEntry] = OrderedDict()
        self._newest_ext = -1
        self._rtx_window: deque[tuple[SimTime, int]] = deque()
        self._rtx_window_bytes = 0
        self.stats = RtxGateStats()

    def __len__(self) -> int:
        return len(self._entries)

    def store(self, packet: RtpPacket, ext_seq: int, now: SimTime) -> None:
        self._entries[ext_seq] = _BufferEntry(packet, now)
        if ext_seq > self._newest_ext:
            self._newest_ext = ext_seq
        self._evict(now)

    def _evict(self, now: SimTime) -> None:
        age_limit = now - self._config.rtx_age_ms * 1_000
        low = self._newest_ext - BUFFER_SEQ_WINDOW
        entries = self._entries
        while entries:
            seq, entry = next(iter(entries.items()))
            if seq < low or entry.stored_at < age_limit:
                del entries[seq]
            else:
                break

    def unwrap_request(self, seq16: int) -> int:
        """Map a 16-bit NACKed seq to the extended space, nearest the newest."""
        if self._newest_ext < 0:
            return seq16
        delta = (seq16 - self._newest_ext) % SEQ_SPACE
        if delta < SEQ_SPACE // 2:
            return self._newest_ext + delta
        return self._newest_ext - (SEQ_SPACE - delta)

    def handle_nack(self, seqs16, now: SimTime, rtt_estimate_us: SimTime,
                    bwe_bps: int) -> list[RtpPacket]:
        """Apply the four gates and return fresh retransmission copies."""
        self._evict(now)
        self._prune_window(now)
        budget = self._config.rtx_bandwidth_fraction * bwe_bps / 8.0  # bytes/s
        out = []
        stats = self.stats
        for seq16 in seqs16:
            stats.requested += 1
            entry = self._entries.get(self.unwrap_request(seq16))
            if entry is None:
                stats.not_in_buffer += 1
                continue
            if entry.last_rtx_at is not None and now - entry.last_rtx_at < rtt_estimate_us:
                stats.within_rtt += 1
                continue
            if entry.rtx_count >= self._config.rtx_max_count:
                stats.count_exhausted += 1
                continue
            size = entry.packet.wire_size
            if self._rtx_window_bytes + size > budget:
                stats.budget_exceeded += 1
                continue
            entry.rtx_count += 1
            entry.last_rtx_at = now
            self._rtx_window.append((now, size))
            self._rtx_window_bytes += size
            stats.granted += 1
            rtx = copy.copy(entry.packet)
            rtx.is_retransmission = True
            rtx.transport_seq = None
            rtx.send_time = None
            rtx.link_start = None
            rtx.arrival_time = None
            out.append(rtx)
        return out

    def _prune_window(self, now: SimTime) -> None:
        window = self._rtx_window
        while window and window[0][0] <= now - RTX_WINDOW_US:
            self._rtx_window_bytes -= window.popleft()[1]


class FecEncoder:
    """Builds one parity packet per closed group, interleaved after the group."""

    def __init__(self, config: ReliabilityConfig):
        config.validate()
        self._config = config
        self._next_group_id = 0
        self._next_fec_seq = 0
        self.parities_built = 0

    def protect_frame(self, packets: list[RtpPacket]) -> list[RtpPacket]:
        """Return the frame's send list with parity packets inserted.

        All packets of one frame share a protection class, so grouping is a
        simple chunking; the trailing partial group is flushed with the frame.
        """
        if not packets:
            return []
        group_size = (self._config.fec_group_key if packets[0].is_keyframe
                      else self._config.fec_group_delta)
        out: list[RtpPacket] = []
        for start in range(0, len(packets), group_size):
            group = packets[start:start + group_size]
            gid = self._next_group_id
            self._next_group_id += 1
            for pkt in group:
                pkt.fec_group_id = gid
                out.append(pkt)
            out.append(self._parity_for(group, gid))
        return out

    def _parity_for(self, group: list[RtpPacket], gid: int) -> RtpPacket:
        covered = tuple(
            CoveredPacket(p.stream_seq, p.frame_id, p.frame_packet_index,
                          p.frame_packet_count, p.payload_size, p.marker,
                          p.is_keyframe, p.rtp_timestamp)
            for p in group
        )
        payload = None
        if all(p.payload is not None for p in group):
            payload = xor_payloads([p.payload for p in group])
        parity = RtpPacket(
            stream_seq=self._next_fec_seq % SEQ_SPACE,
            rtp_timestamp=group[-1].rtp_timestamp,
            frame_id=group[-1].frame_id,
            frame_packet_index=0,
            frame_packet_count=0,
            payload_size=max(p.payload_size for p in group),
            is_keyframe=group[0].is_keyframe,
            is_fec=True,
            fec_group_id=gid,
            fec_covered=covered,
            payload=payload,
            enqueue_time=group[-1].enqueue_time,
        )
        self._next_fec_seq += 1
        self.parities_built += 1
        return parity


def repair_group(covered, present: dict[int, RtpPacket],
                 parity: RtpPacket) -> RtpPacket | None:
    """Rebuild the single missing member of a FEC group, or None.

    `present` maps stream_seq -> received packet for the group's members.
    Exactly one missing member is recoverable; zero or several are not.
    """
    missing = [c for c in covered if c.stream_seq not in present]
    if len(missing) != 1:
        return None
    ref = missing[0]
    payload = None
    if parity.payload is not None and all(
            present[c.stream_seq].payload is not None
            for c in covered if c.stream_seq != ref.stream_seq):
        others = [present[c.stream_seq].payload
                  for c in covered if c.stream_seq != ref.stream_seq]
        payload = xor_payloads([parity.payload] + others)[:ref.payload_size]
    rebuilt = RtpPacket(
        stream_seq=ref.stream_seq,
        rtp_timestamp=ref.rtp_timestamp,
        frame_id=ref.frame_id,
        frame_packet_index=ref.frame_packet_index,
        frame_packet_count=ref.frame_packet_count,
        payload_size=ref.payload_size,
        marker=ref.marker,
        is_keyframe=ref.is_keyframe,
        fec_group_id=parity.fec_group_id,
        payload=payload,
        enqueue_time=parity.enqueue_time,
        send_time=parity.send_time,
        link_start=parity.link_start,
        arrival_time=parity.arrival_time,
    )
    return rebuilt
