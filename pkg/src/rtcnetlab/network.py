"""Impaired unidirectional links, a reliable in-order (TCP-like) wrapper,
and a deterministic dual-link splitter.

A Link is a single-server drop-tail byte queue followed by a propagation
delay: arrival = serialization completion + one-way delay. Capacity and delay
vary over time through scheduled windows:

  congestion    capacity *= factor, delay += extra (overlaps compose)
  handover      the serializer pauses; admitted packets buffer (still subject
                to the queue limit) and drain as a burst at resume
  out_of_range  everything in the window is dropped

Background load is subtracted from usable capacity before congestion factors
apply, floored at 5% of base capacity. Random loss is applied after queuing:
a lost packet consumes serializer time, then vanishes. Within one link, UDP
arrivals never reorder (arrival times are clamped monotone when a shrinking
delay window would otherwise overtake an earlier packet).

Drop reasons are a closed set so the conservation identity
sent = delivered + dropped(queue_overflow|random|out_of_range) + in_flight
holds exactly over every object ever handed to a link.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from .engine import ConfigError, Engine, RngStream, SimTime, US_PER_S

DROP_QUEUE = "queue_overflow"
DROP_RANDOM = "random"
DROP_RANGE = "out_of_range"
DROP_REASONS = (DROP_QUEUE, DROP_RANDOM, DROP_RANGE)

BACKGROUND_CAPACITY_FLOOR = 0.05  # of base capacity, after load subtraction

TCP_MIN_RTO_US = 200_000
TCP_MAX_RTO_US = 60 * US_PER_S
TCP_ACK_WIRE_BYTES = 40
TCP_SRTT_GAIN = 0.125


@dataclass(slots=True)
class CongestionWindow:
    start: SimTime
    end: SimTime
    capacity_factor: float
    extra_delay_us: SimTime


@dataclass(slots=True)
class PauseWindow:        # handover
    start: SimTime
    end: SimTime


@dataclass(slots=True)
class OutageWindow:       # out_of_range
    start: SimTime
    end: SimTime


@dataclass(slots=True)
class BackgroundWindow:   # competing traffic burst
    start: SimTime
    end: SimTime
    bps: int


@dataclass
class LinkProfile:
    name: str = "link"
    capacity_bps: int = 10_000_000
    delay_us: SimTime = 15_000
    queue_limit_bytes: int = 3_000_000
    random_loss: float = 0.0
    background_bps: int = 0
    available_until: SimTime | None = None
    congestion: list[CongestionWindow] = field(default_factory=list)
    pauses: list[PauseWindow] = field(default_factory=list)
    outages: list[OutageWindow] = field(default_factory=list)
    background: list[BackgroundWindow] = field(default_factory=list)

    def validate(self, mtu: int = 1_250) -> None:
        if self.capacity_bps <= 0:
            raise ConfigError(f"link {self.name}: capacity_bps must be > 0")
        if self.delay_us < 0:
            raise ConfigError(f"link {self.name}: delay must be >= 0")
        if self.queue_limit_bytes <= mtu:
            raise ConfigError(
                f"link {self.name}: queue_limit_bytes must exceed the MTU ({mtu})")
        if not (0.0 <= self.random_loss <= 1.0):
            raise ConfigError(f"link {self.name}: random_loss must be in [0, 1]")
        if self.background_bps < 0:
            raise ConfigError(f"link {self.name}: background load must be >= 0")
        for w in self.congestion:
            if not (0.0 < w.capacity_factor <= 1.0):
                raise ConfigError(
                    f"link {self.name}: capacity_factor must be in (0, 1]")
            if w.extra_delay_us < 0 or w.end < w.start:
                raise ConfigError(f"link {self.name}: malformed congestion window")
        for w in self.background:
            if w.bps < 0 or w.end < w.start:
                raise ConfigError(f"link {self.name}: malformed background window")


@dataclass
class LinkStats:
    sent: int = 0
    delivered: int = 0
    delivered_bytes: int = 0
    dropped: dict = field(default_factory=lambda: {r: 0 for r in DROP_REASONS})
    in_flight: int = 0


class Link:
    """One direction of one path. deliver(obj, now) / drop(obj, reason, now)."""

    def __init__(self, engine: Engine, profile: LinkProfile, loss_rng: RngStream,
                 deliver, drop):
        self._engine = engine
        self.profile = profile
        self._loss_rng = loss_rng
        self._deliver = deliver
        self._drop = drop
        self._free_at: SimTime = 0
        self._backlog: deque[tuple[SimTime, int]] = deque()  # (serialize_end, bytes)
        self._backlog_bytes = 0
        self._last_arrival: SimTime = 0
        self.stats = LinkStats()
        self._floor_bps = max(
            1, int(profile.capacity_bps * BACKGROUND_CAPACITY_FLOOR))

    # -- time-varying state ------------------------------------------------

    def capacity_at(self, t: SimTime) -> float:
        bg = self.profile.background_bps
        for w in self.profile.background:
            if w.start <= t < w.end:
                bg += w.bps
        cap = float(max(self.profile.capacity_bps - bg, self._floor_bps))
        for w in self.profile.congestion:
            if w.start <= t < w.end:
                cap *= w.capacity_factor
        return max(cap, 1.0)

    def delay_at(self, t: SimTime) -> SimTime:
        delay = self.profile.delay_us
        for w in self.profile.congestion:
            if w.start <= t < w.end:
                delay += w.extra_delay_us
        return delay

    def in_outage(self, t: SimTime) -> bool:
        return any(w.start <= t < w.end for w in self.profile.outages)

    def is_up(self, t: SimTime) -> bool:
        if self.profile.available_until is not None and t >= self.profile.available_until:
            return False
        return not self.in_outage(t)

    def queue_bytes(self, now: SimTime) -> int:
        self._prune_backlog(now)
        return self._backlog_bytes

    def _prune_backlog(self, now: SimTime) -> None:
        backlog = self._backlog
        while backlog and backlog[0][0] <= now:
            self._backlog_bytes -= backlog.popleft()[1]

    def _pause_adjusted(self, t: SimTime) -> SimTime:
        for w in self.profile.pauses:
            if w.start <= t < w.end:
                return w.end
        return t

    # -- data path -----------------------------------------------------------

    def transmit(self, obj, now: SimTime) -> None:
        self.stats.sent += 1
        if not self.is_up(now):
            self._drop_now(obj, DROP_RANGE, now)
            return
        self._prune_backlog(now)
        size = obj.wire_size
        if self._backlog_bytes + size > self.profile.queue_limit_bytes:
            self._drop_now(obj, DROP_QUEUE, now)
            return

        start = self._pause_adjusted(max(now, self._free_at))
        serialization = max(1, size * 8 * US_PER_S // int(self.capacity_at(start)))
        end = start + serialization
        if self.in_outage(end):
            self._drop_now(obj, DROP_RANGE, now)
            return
        self._free_at = end
        self._backlog.append((end, size))
        self._backlog_bytes += size

        loss = self.profile.random_loss
        if loss > 0.0 and self._loss_rng.bernoulli(loss):
            self._drop_now(obj, DROP_RANDOM, now)
            return

        obj.link_start = start
        arrival = end + self.delay_at(end)
        if arrival < self._last_arrival:  # keep per-link FIFO when delay shrinks
            arrival = self._last_arrival
        self._last_arrival = arrival
        self.stats.in_flight += 1
        self._engine.schedule(arrival, "link-deliver", self._arrive, obj)

    def _arrive(self, obj) -> None:
        now = self._engine.clock
        self.stats.in_flight -= 1
        self.stats.delivered += 1
        self.stats.delivered_bytes += obj.wire_size
        obj.arrival_time = now
        self._deliver(obj, now)

    def _drop_now(self, obj, reason: str, now: SimTime) -> None:
        self.stats.dropped[reason] += 1
        self._drop(obj, reason, now)


# -- reliable in-order wrapper ----------------------------------------------


class TcpSegment:
    __slots__ = ("tcp_seq", "inner", "retries", "sent_at", "link_start",
                 "arrival_time", "wire_size")

    def __init__(self, tcp_seq: int, inner, wire_size: int):
        self.tcp_seq = tcp_seq
        self.inner = inner
        self.retries = 0
        self.sent_at: SimTime = 0
        self.link_start: SimTime | None = None
        self.arrival_time: SimTime | None = None
        self.wire_size = wire_size


class TcpAck:
    __slots__ = ("tcp_seq", "retries", "wire_size", "link_start", "arrival_time")

    def __init__(self, tcp_seq: int, retries: int):
        self.tcp_seq = tcp_seq
        self.retries = retries
        self.wire_size = TCP_ACK_WIRE_BYTES
        self.link_start = None
        self.arrival_time = None


class TcpTransport:
    """Reliable, strictly in-order byte pipe over a lossy Link.

    Simplified on purpose: no congestion window or slow start, so the only
    effects it adds over UDP are retransmission delay and head-of-line
    blocking. Lost segments retransmit after RTO = max(200 ms, 2 x SRTT),
    doubling per retry; RTT samples follow Karn's rule (first transmissions
    only). Receive-side release is contiguous: a recovered hole releases the
    whole blocked burst back-to-back at one instant, and every byte is
    delivered exactly once.
    """

    def __init__(self, engine: Engine, link: Link, ack_link: Link, deliver):
        self._engine = engine
        self._link = link
        self._ack_link = ack_link
        self._deliver = deliver
        self._next_seq = 0
        self._expected = 0
        self._reorder: dict[int, TcpSegment] = {}
        self._unacked: dict[int, TcpSegment] = {}
        self._timers: dict[int, object] = {}
        self._srtt_us: float | None = None
        self.retransmissions = 0
        self.duplicates = 0
        self.accepted = 0   # inner objects handed to send()
        self.released = 0   # inner objects delivered in order

    @property
    def srtt_us(self) -> float | None:
        return self._srtt_us

    def rto_us(self, retries: int) -> SimTime:
        base = TCP_MIN_RTO_US if self._srtt_us is None else max(
            TCP_MIN_RTO_US, int(2 * self._srtt_us))
        return min(base << retries, TCP_MAX_RTO_US)

    def send(self, obj, now: SimTime) -> None:
        seg = TcpSegment(self._next_seq, obj, obj.wire_size)
        self._next_seq += 1
        self.accepted += 1
        self._unacked[seg.tcp_seq] = seg
        self._transmit(seg, now)

    def _transmit(self, seg: TcpSegment, now: SimTime) -> None:
        seg.sent_at = now
        self._link.transmit(seg, now)
        self._timers[seg.tcp_seq] = self._engine.schedule(
            now + self.rto_us(seg.retries), "tcp-rto", self._on_timeout, seg.tcp_seq)

    def _on_timeout(self, tcp_seq: int) -> None:
        seg = self._unacked.get(tcp_seq)
        if seg is None:
            return
        seg.retries += 1
        self.retransmissions += 1
        self._transmit(seg, self._engine.clock)

    def on_segment_arrival(self, seg: TcpSegment, now: SimTime) -> None:
        self._ack_link.transmit(TcpAck(seg.tcp_seq, seg.retries), now)
        if seg.tcp_seq < self._expected or seg.tcp_seq in self._reorder:
            self.duplicates += 1
            return
        self._reorder[seg.tcp_seq] = seg
        while self._expected in self._reorder:
            ready = self._reorder.pop(self._expected)
            self._expected += 1
            self.released += 1
            inner = ready.inner
            inner.link_start = ready.link_start
            inner.arrival_time = now
            self._deliver(inner, now)

    def on_ack_arrival(self, ack: TcpAck, now: SimTime) -> None:
        seg = self._unacked.pop(ack.tcp_seq, None)
        if seg is None:
            return
        timer = self._timers.pop(ack.tcp_seq, None)
        if timer is not None:
            timer.cancel()
        if ack.retries == 0 and seg.retries == 0:
            sample = now - seg.sent_at
            if self._srtt_us is None:
                self._srtt_us = float(sample)
            else:
                self._srtt_us += TCP_SRTT_GAIN * (sample - self._srtt_us)


# -- dual-link splitter -------------------------------------------------------


class MultihomeSplitter:
    """Deterministic per-packet alternation between two links.

    Error-diffusion on the configured ratio realizes it exactly (ratio 0.5 is
    strict alternation). When one link is unavailable everything goes to the
    survivor; when both are down the packet is dropped as out_of_range.
    """

    def __init__(self, primary: Link, secondary: Link, ratio: float = 0.5):
        if not (0.0 <= ratio <= 1.0):
            raise ConfigError(f"multihome ratio must be in [0, 1], got {ratio}")
        self._links = (primary, secondary)
        self._ratio = ratio
        self._credit = 0.0
        self.dropped_both_down = 0

    def route(self, obj, now: SimTime) -> Link | None:
        up = [link for link in self._links if link.is_up(now)]
        if not up:
            self.dropped_both_down += 1
            return None
        if len(up) == 1:
            return up[0]
        self._credit += self._ratio
        if self._credit >= 1.0 - 1e-12:
            self._credit -= 1.0
            return self._links[0]
        return self._links[1]
