"""Receiver reports, transport-wide arrival feedback, and RTT derivation.

Transport-wide feedback covers every transport_seq exactly once across the
lifetime of a session: each report spans (previous end, highest seen], with
per-sequence arrival deltas on a 250 us grid. Arrival timestamps are floor-
quantized to the grid *before* delta encoding, so reconstruction error is
bounded by one quantum per packet and never accumulates along the chain.
If a report is lost in transit the builder takes its range back and the next
report covers the union, keeping the partition gapless.

Receiver reports carry interval loss (computed exactly from sequence-number
arithmetic), cumulative loss, the RFC 3550 running interarrival-jitter
estimate, and the echo pair (last_sr, delay_since_last_sr) from which the
sender derives RTT = now - lsr - dlsr.
"""

from __future__ import annotations

from dataclasses import dataclass

from .engine import SimTime, US_PER_S

TWCC_DELTA_US = 250
RTT_FLOOR_US = 1_000
JITTER_GAIN = 1.0 / 16.0  # RFC 3550 running estimator


@dataclass(slots=True)
class SenderReport:
    send_time: SimTime
    wire_size: int = 80
    link_start: SimTime | None = None
    arrival_time: SimTime | None = None


@dataclass(slots=True)
class ReceiverReport:
    fraction_lost: float
    cumulative_lost: int
    highest_ext_seq: int
    jitter_us: float
    lsr: SimTime | None
    dlsr: SimTime | None
    wire_size: int = 80
    link_start: SimTime | None = None
    arrival_time: SimTime | None = None


@dataclass(slots=True)
class NackRequest:
    seqs: tuple
    wire_size: int = 20
    link_start: SimTime | None = None
    arrival_time: SimTime | None = None

    def __post_init__(self):
        self.wire_size = 20 + 2 * len(self.seqs)


@dataclass(slots=True)
class KeyframeRequest:
    wire_size: int = 20
    link_start: SimTime | None = None
    arrival_time: SimTime | None = None


class TwccFeedback:
    """Arrival statuses for the contiguous transport_seq range [base, last]."""

    __slots__ = ("base_seq", "last_seq", "base_units", "deltas", "send_time",
                 "wire_size", "link_start", "arrival_time")

    def __init__(self, base_seq: int, last_seq: int, base_units: int,
                 deltas: list, send_time: SimTime):
        self.base_seq = base_seq
        self.last_seq = last_seq
        self.base_units = base_units        # quantized arrival of first received
        self.deltas = deltas                # per seq: delta units, or None if missing
        self.send_time = send_time
        received = sum(1 for d in deltas if d is not None)
        span = last_seq - base_seq + 1
        self.wire_size = 20 + (span + 3) // 4 + 2 * received
        self.link_start = None
        self.arrival_time = None

    def arrivals(self):
        """Yield (transport_seq, reconstructed_arrival_us) for received seqs."""
        units = self.base_units
        first = True
        for offset, delta in enumerate(self.deltas):
            if delta is None:
                continue
            if first:
                first = False
            else:
                units += delta
            yield self.base_seq + offset, units * TWCC_DELTA_US

    def statuses(self):
        """Yield (transport_seq, received: bool)."""
        for offset, delta in enumerate(self.deltas):
            yield self.base_seq + offset, delta is not None


class TwccRecorder:
    """Receiver-side arrival log and feedback builder."""

    def __init__(self):
        self._pending: dict[int, int] = {}  # transport_seq -> arrival units
        self._next_base = 0
        self._highest = -1

    def note(self, transport_seq: int, arrival_us: SimTime) -> None:
        # Duplicate transport_seqs keep the first arrival.
        self._pending.setdefault(transport_seq, arrival_us // TWCC_DELTA_US)
        if transport_seq > self._highest:
            self._highest = transport_seq

    def build(self, now: SimTime) -> TwccFeedback | None:
        if not self._pending:
            return None
        base = self._next_base
        last = self._highest
        if last < base:
            return None
        deltas: list = [None] * (last - base + 1)
        prev_units = None
        base_units = 0
        pending = self._pending
        for seq in range(base, last + 1):
            units = pending.pop(seq, None)
            if units is None:
                continue
            if prev_units is None:
                base_units = units
                deltas[seq - base] = 0
            else:
                deltas[seq - base] = units - prev_units
            prev_units = units
        self._next_base = last + 1
        return TwccFeedback(base, last, base_units, deltas, now)

    def restore(self, feedback: TwccFeedback) -> None:
        """A report was lost in transit: take its range back so the next one
        covers the union."""
        units = feedback.base_units
        first = True
        for offset, delta in enumerate(feedback.deltas):
            if delta is None:
                continue
            if first:
                first = False
            else:
                units += delta
            self._pending.setdefault(feedback.base_seq + offset, units)
        if feedback.base_seq < self._next_base:
            self._next_base = feedback.base_seq


class U32Unwrapper:
    """Extends a 32-bit wrapping counter (media timestamps) monotonically."""

    __slots__ = ("_highest",)
    SPACE = 1 << 32

    def __init__(self):
        self._highest: int | None = None

    def unwrap(self, value: int) -> int:
        if self._highest is None:
            self._highest = value
            return value
        space = self.SPACE
        delta = (value - (self._highest % space)) % space
        if delta < space // 2:
            ext = self._highest + delta
        else:
            ext = self._highest - (space - delta)
        if ext > self._highest:
            self._highest = ext
        return ext


class RtcpReceiverState:
    """Receiver bookkeeping behind periodic receiver reports."""

    def __init__(self):
        self._first_ext: int | None = None
        self._highest_ext = -1
        self._unique_received = 0
        self._win_expected_base = -1
        self._win_received_base = 0
        self._prev_arrival: SimTime | None = None
        self._prev_ts_us: float | None = None
        self._ts_unwrap = U32Unwrapper()
        self.jitter_us = 0.0
        self._last_sr: SenderReport | None = None
        self._last_sr_received_at: SimTime | None = None

    def on_unique_media(self, ext_seq: int, rtp_timestamp: int,
                        arrival_us: SimTime, clock_hz: int = 90_000) -> None:
        if self._first_ext is None:
            self._first_ext = ext_seq
            self._win_expected_base = ext_seq - 1
        if ext_seq > self._highest_ext:
            self._highest_ext = ext_seq
        self._unique_received += 1
        ts_us = self._ts_unwrap.unwrap(rtp_timestamp) * US_PER_S / clock_hz
        if self._prev_arrival is not None:
            d = (arrival_us - self._prev_arrival) - (ts_us - self._prev_ts_us)
            self.jitter_us += (abs(d) - self.jitter_us) * JITTER_GAIN
        self._prev_arrival = arrival_us
        self._prev_ts_us = ts_us

    def on_sender_report(self, sr: SenderReport, now: SimTime) -> None:
        self._last_sr = sr
        self._last_sr_received_at = now

    def expected_cumulative(self) -> int:
        if self._first_ext is None:
            return 0
        return self._highest_ext - self._first_ext + 1

    def cumulative_lost(self) -> int:
        return max(0, self.expected_cumulative() - self._unique_received)

    def build_report(self, now: SimTime) -> ReceiverReport:
        expected_delta = self._highest_ext - self._win_expected_base
        received_delta = self._unique_received - self._win_received_base
        if expected_delta > 0:
            fraction = max(0.0, (expected_delta - received_delta) / expected_delta)
        else:
            fraction = 0.0
        self._win_expected_base = self._highest_ext
        self._win_received_base = self._unique_received
        lsr = dlsr = None
        if self._last_sr is not None:
            lsr = self._last_sr.send_time
            dlsr = now - self._last_sr_received_at
        return ReceiverReport(
            fraction_lost=fraction,
            cumulative_lost=self.cumulative_lost(),
            highest_ext_seq=self._highest_ext,
            jitter_us=self.jitter_us,
            lsr=lsr,
            dlsr=dlsr,
        )


def compute_rtt(report: ReceiverReport, now: SimTime,
                floor_us: SimTime = RTT_FLOOR_US) -> SimTime | None:
    """RTT from the report's echo pair; None when no report has been echoed."""
    if report.lsr is None or report.dlsr is None:
        return None
    return max(floor_us, now - report.lsr - report.dlsr)
