"""Receiver side: reassembly, loss tracking, repair, and timed playout.

Frames play strictly in capture order. Each frame's playout target is
capture_time + playout_delay + accumulated lateness (the offset grows
whenever a frame resolves past its target, so targets stay tethered to the
wall clock instead of drifting unboundedly behind it). A frame that is
complete by its target plays exactly at the target. An incomplete frame
stalls playout while repair is still plausible:

  * a missing sequence number above the highest seen so far may simply be
    in flight, and
  * a missing sequence number with an active retransmission request keeps
    hope while more requests remain or a response is still within
    rtx_wait_ms of the last request.

Hope or not, a frame is never waited on past target + max_stall_ms. A
skipped frame counts every packet that never arrived as lost at playout.

Skipping a keyframe leaves the stream undecodable until a later keyframe
plays; undecodable delta frames resolve immediately as skipped. A keyframe
request goes out (rate limited) whenever a resync is pending, and once a
complete keyframe is buffered ahead of a late head frame the receiver
jumps: everything before the keyframe resolves instantly and playout
resumes from the keyframe.

The sender and receiver share a FrameLedger carrying per-frame truth
(capture time, sequence range, packet count). In the real protocol the
same facts are inferred from packet headers; sharing them keeps accounting
exact even when every packet of a frame is lost.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .engine import Engine, SimTime, ms_to_us
from .reliability import repair_group
from .rtp import RtpPacket, SEQ_SPACE

SKIP_GIVE_UP = "give_up"
SKIP_UNDECODABLE = "undecodable"
SKIP_RESYNC = "resync"

FEC_GROUP_CACHE = 512   # groups kept for repair; older ones are long resolved


@dataclass(slots=True)
class PlayoutConfig:
    playout_delay_ms: int = 200
    max_stall_ms: int = 500
    rtx_wait_ms: int = 250
    decode_latency_ms: int = 1
    nack_enabled: bool = True
    nack_interval_ms: int = 20
    nack_max_count: int = 10
    nack_list_limit: int = 1000
    nack_window: int = 10_000
    keyframe_request_enabled: bool = True
    keyframe_request_interval_ms: int = 500
    resync_backlog_frames: int = 5
    stall_poll_ms: int = 5
    record_releases: bool = False

    def validate(self) -> None:
        from .engine import ConfigError
        if self.playout_delay_ms <= 0:
            raise ConfigError("playout_delay_ms must be positive")
        if self.max_stall_ms < 0 or self.rtx_wait_ms < 0:
            raise ConfigError("stall windows must be non-negative")
        if self.nack_interval_ms <= 0 or self.nack_max_count < 0:
            raise ConfigError("nack_interval_ms must be positive and "
                              "nack_max_count non-negative")
        if self.nack_list_limit <= 0 or self.nack_window <= 0:
            raise ConfigError("nack list bounds must be positive")
        if self.stall_poll_ms <= 0:
            raise ConfigError("stall_poll_ms must be positive")


@dataclass(slots=True)
class LedgerEntry:
    frame_id: int
    capture_time: SimTime
    encode_done_time: SimTime
    first_ext_seq: int
    packet_count: int
    is_keyframe: bool
    frame_bytes: int


class FrameLedger:
    """Sender-side truth about every encoded frame, shared with the receiver."""

    def __init__(self):
        self._entries: dict[int, LedgerEntry] = {}

    def add(self, entry: LedgerEntry) -> None:
        self._entries[entry.frame_id] = entry

    def get(self, frame_id: int) -> LedgerEntry | None:
        return self._entries.get(frame_id)

    def __len__(self) -> int:
        return len(self._entries)


class SequenceUnwrapper:
    """Extends a wrapping counter to a monotone unbounded one."""

    __slots__ = ("_space", "_half", "_highest")

    def __init__(self, space: int = SEQ_SPACE):
        self._space = space
        self._half = space // 2
        self._highest: int | None = None

    def unwrap(self, value: int) -> int:
        if self._highest is None:
            self._highest = value
            return value
        delta = (value - (self._highest % self._space)) % self._space
        if delta < self._half:
            ext = self._highest + delta
        else:
            ext = self._highest - (self._space - delta)
        if ext > self._highest:
            self._highest = ext
        return ext


@dataclass(slots=True)
class _MissingEntry:
    ext_seq: int
    first_seen_at: SimTime
    nack_count: int = 0
    last_nack_at: SimTime | None = None


class MissingList:
    """Gap tracker feeding retransmission requests, with hard bounds."""

    def __init__(self, limit: int, window: int):
        self._entries: dict[int, _MissingEntry] = {}
        self._limit = limit
        self._window = window

    def __contains__(self, ext_seq: int) -> bool:
        return ext_seq in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def get(self, ext_seq: int) -> _MissingEntry | None:
        return self._entries.get(ext_seq)

    def add_gap(self, start: int, end: int, now: SimTime) -> None:
        """Register ext seqs in [start, end) as missing."""
        for seq in range(start, end):
            self._entries[seq] = _MissingEntry(seq, now)

    def resolve(self, ext_seq: int) -> None:
        self._entries.pop(ext_seq, None)

    def drop_range(self, start: int, end: int) -> None:
        stale = [s for s in self._entries if start <= s < end]
        for s in stale:
            del self._entries[s]

    def prune(self, highest_ext: int) -> None:
        floor = highest_ext - self._window
        if floor > 0:
            stale = [s for s in self._entries if s < floor]
            for s in stale:
                del self._entries[s]
        overflow = len(self._entries) - self._limit
        if overflow > 0:
            for s in sorted(self._entries)[:overflow]:
                del self._entries[s]

    def collect_due(self, now: SimTime, interval_us: SimTime,
                    max_count: int) -> list:
        due = []
        for seq in sorted(self._entries):
            e = self._entries[seq]
            if e.nack_count >= max_count:
                continue
            if e.last_nack_at is not None and now - e.last_nack_at < interval_us:
                continue
            e.nack_count += 1
            e.last_nack_at = now
            due.append(seq)
        return due


@dataclass(slots=True)
class _FrameState:
    frame_id: int
    first_ext: int
    packet_count: int
    is_keyframe: bool
    received: set = field(default_factory=set)   # frame_packet_index values
    resolved: bool = False
    completing_packet: RtpPacket | None = None
    completed_at: SimTime | None = None

    @property
    def complete(self) -> bool:
        return len(self.received) >= self.packet_count


@dataclass(slots=True)
class _FecGroup:
    parity: RtpPacket | None = None
    members: dict = field(default_factory=dict)  # stream_seq -> packet
    used: bool = False


@dataclass(slots=True)
class PlayedFrame:
    frame_id: int
    capture_time: SimTime
    resolve_time: SimTime
    playout_time: SimTime
    frame_bytes: int
    is_keyframe: bool
    processing_us: SimTime
    queuing_us: SimTime
    transmission_us: SimTime
    decoding_us: SimTime


@dataclass(slots=True)
class SkippedFrame:
    frame_id: int
    capture_time: SimTime
    resolve_time: SimTime
    reason: str
    packets_lost: int
    packets_received: int
    is_keyframe: bool


class ReceiverStats:
    __slots__ = ("frames_played", "frames_skipped", "packets_expected",
                 "packets_lost_at_playout", "duplicates", "repairs",
                 "keyframe_requests", "stall_us", "skip_reasons")

    def __init__(self):
        self.frames_played = 0
        self.frames_skipped = 0
        self.packets_expected = 0
        self.packets_lost_at_playout = 0
        self.duplicates = 0
        self.repairs = 0
        self.keyframe_requests = 0
        self.stall_us = 0
        self.skip_reasons = {SKIP_GIVE_UP: 0, SKIP_UNDECODABLE: 0,
                             SKIP_RESYNC: 0}


class Receiver:
    """Reassembles frames from packets and plays them out on a timed clock.

    Callbacks (all optional):
      send_nack(list_of_stream_seqs)   request retransmissions
      send_keyframe_request()          ask the sender to refresh the stream
      on_frame_played(PlayedFrame)
      on_frame_skipped(SkippedFrame)
      on_stall(waited_us, resolve_time)

    on_packet() returns the extended sequence number when the packet is a
    first-time media arrival (the caller feeds those into its receiver-report
    state) and None for duplicates, parity packets, and internal repairs.
    """

    def __init__(self, engine: Engine, config: PlayoutConfig,
                 ledger: FrameLedger):
        config.validate()
        self.engine = engine
        self.config = config
        self.ledger = ledger
        self.stats = ReceiverStats()

        self._unwrap = SequenceUnwrapper()
        self._highest_ext = -1
        self._missing = MissingList(config.nack_list_limit, config.nack_window)
        self._frames: dict[int, _FrameState] = {}
        self._fec_groups: dict[int, _FecGroup] = {}
        self._complete_keyframes: set[int] = set()

        self._position = 0
        self._turn_start: SimTime = 0
        self._offset_us: SimTime = ms_to_us(config.playout_delay_ms)
        self._decodable = True
        self._resync_needed = False
        self._last_keyframe_request: SimTime | None = None
        self._head_timer = None
        self._announced: set[int] = set()
        self._max_announced = -1
        self.releases: list = []

        self.send_nack = None
        self.send_keyframe_request = None
        self.on_frame_played = None
        self.on_frame_skipped = None
        self.on_stall = None

        if config.nack_enabled:
            engine.schedule_in(ms_to_us(config.nack_interval_ms),
                               "recv.nack_poll", self._nack_poll)

    # ------------------------------------------------------------------ ingest

    def on_frame_encoded(self, frame_id: int) -> None:
        """The sender announces a captured frame; makes ghost frames visible."""
        self._announced.add(frame_id)
        if frame_id > self._max_announced:
            self._max_announced = frame_id
        if frame_id == self._position:
            self._arm_head()

    def on_packet(self, pkt: RtpPacket) -> int | None:
        now = self.engine.clock
        if pkt.is_fec:
            group = self._fec_groups.setdefault(pkt.fec_group_id, _FecGroup())
            if group.parity is None:
                group.parity = pkt
            self._try_repair(pkt.fec_group_id, now)
            return None
        ext = self._unwrap.unwrap(pkt.stream_seq)
        self._note_sequence(ext, now)
        first_time = self._ingest_media(pkt, ext, now)
        if first_time and pkt.fec_group_id is not None:
            group = self._fec_groups.setdefault(pkt.fec_group_id, _FecGroup())
            group.members[pkt.stream_seq] = pkt
            self._try_repair(pkt.fec_group_id, now)
        while len(self._fec_groups) > FEC_GROUP_CACHE:
            self._fec_groups.pop(next(iter(self._fec_groups)))
        return ext if first_time else None

    # ----------------------------------------------------------- sequence gaps

    def _note_sequence(self, ext: int, now: SimTime) -> None:
        if ext > self._highest_ext:
            if self._highest_ext >= 0 and ext > self._highest_ext + 1:
                self._missing.add_gap(self._highest_ext + 1, ext, now)
            self._highest_ext = ext
            self._missing.prune(ext)
        else:
            self._missing.resolve(ext)

    def _ingest_media(self, pkt: RtpPacket, ext: int, now: SimTime) -> bool:
        fs = self._frame_state(pkt, ext)
        if pkt.frame_packet_index in fs.received:
            self.stats.duplicates += 1
            return False
        fs.received.add(pkt.frame_packet_index)
        if fs.resolved:
            return True
        if fs.complete and fs.completed_at is None:
            fs.completed_at = now
            fs.completing_packet = pkt
            if fs.is_keyframe:
                self._complete_keyframes.add(fs.frame_id)
                if fs.frame_id != self._position and self._try_jump(now):
                    self._arm_head()
        if fs.frame_id == self._position and not fs.resolved:
            self._arm_head()
        return True

    def _frame_state(self, pkt: RtpPacket, ext: int) -> _FrameState:
        fs = self._frames.get(pkt.frame_id)
        if fs is None:
            entry = self.ledger.get(pkt.frame_id)
            first_ext = (entry.first_ext_seq if entry is not None
                         else ext - pkt.frame_packet_index)
            fs = _FrameState(
                frame_id=pkt.frame_id,
                first_ext=first_ext,
                packet_count=pkt.frame_packet_count,
                is_keyframe=pkt.is_keyframe,
            )
            self._frames[pkt.frame_id] = fs
        return fs

    # -------------------------------------------------------------------- FEC

    def _try_repair(self, group_id: int, now: SimTime) -> None:
        group = self._fec_groups.get(group_id)
        if group is None or group.parity is None or group.used:
            return
        parity = group.parity
        covered = parity.fec_covered
        if not covered:
            return
        fs = self._frames.get(covered[0].frame_id)
        if fs is not None and fs.resolved:
            group.used = True
            return
        missing = [c for c in covered
                   if fs is None or c.frame_packet_index not in fs.received]
        if len(missing) != 1:
            return
        group.used = True
        rebuilt = repair_group(covered, group.members, parity)
        if rebuilt is None:
            return
        self.stats.repairs += 1
        ext = self._unwrap.unwrap(rebuilt.stream_seq)
        self._missing.resolve(ext)
        self._ingest_media(rebuilt, ext, now)

    # ------------------------------------------------------------------- NACK

    def _nack_poll(self) -> None:
        now = self.engine.clock
        cfg = self.config
        due = self._missing.collect_due(now, ms_to_us(cfg.nack_interval_ms),
                                        cfg.nack_max_count)
        if due and self.send_nack is not None:
            self.send_nack([seq % SEQ_SPACE for seq in due])
        self.engine.schedule_in(ms_to_us(cfg.nack_interval_ms),
                                "recv.nack_poll", self._nack_poll)

    # ---------------------------------------------------------------- playout

    def _target(self, entry: LedgerEntry) -> SimTime:
        return entry.capture_time + self._offset_us

    def _arm_head(self) -> None:
        """(Re)schedule evaluation of the frame at the playout position."""
        if self._position not in self._announced:
            return
        entry = self.ledger.get(self._position)
        if entry is None:
            return
        now = self.engine.clock
        target = self._target(entry)
        if now >= target:
            self._evaluate_head()
        else:
            self._schedule_head(target)

    def _schedule_head(self, at: SimTime) -> None:
        if self._head_timer is not None:
            self._head_timer.cancel()
        self._head_timer = self.engine.schedule(at, "recv.playout",
                                                self._evaluate_head)

    def _evaluate_head(self) -> None:
        while True:
            if self._position not in self._announced:
                return
            entry = self.ledger.get(self._position)
            if entry is None:
                return
            now = self.engine.clock
            target = self._target(entry)
            if now < target:
                self._schedule_head(target)
                return
            fs = self._frames.get(self._position)
            if not self._decodable and not entry.is_keyframe:
                self._skip(entry, fs, SKIP_UNDECODABLE, now)
            elif fs is not None and fs.complete:
                self._play(entry, fs, now)
            elif self._try_jump(now):
                continue
            else:
                hard_cap = target + ms_to_us(self.config.max_stall_ms)
                if now >= hard_cap or not self._has_hope(entry, fs, now):
                    self._skip(entry, fs, SKIP_GIVE_UP, now)
                else:
                    self._maybe_request_keyframe(now)
                    self._schedule_head(min(
                        hard_cap, now + ms_to_us(self.config.stall_poll_ms)))
                    return
            self._position += 1
            self._turn_start = now

    def _has_hope(self, entry: LedgerEntry, fs: _FrameState | None,
                  now: SimTime) -> bool:
        received = fs.received if fs is not None else ()
        cfg = self.config
        rtx_wait = ms_to_us(cfg.rtx_wait_ms)
        for idx in range(entry.packet_count):
            if idx in received:
                continue
            ext = entry.first_ext_seq + idx
            if ext > self._highest_ext:
                return True
            if cfg.nack_enabled:
                me = self._missing.get(ext)
                if me is not None:
                    if me.nack_count < cfg.nack_max_count:
                        return True
                    if me.last_nack_at is not None and \
                            now - me.last_nack_at <= rtx_wait:
                        return True
        return False

    def _try_jump(self, now: SimTime) -> bool:
        """Resync to a buffered complete keyframe when the head frame is late.

        Advances the position to the keyframe, resolving everything before
        it, and leaves the keyframe itself for the caller to evaluate.
        """
        if not self._complete_keyframes:
            return False
        entry = self.ledger.get(self._position)
        if entry is None or self._position not in self._announced:
            return False
        if now < self._target(entry):
            return False
        ahead = [f for f in self._complete_keyframes if f > self._position]
        if not ahead:
            return False
        key_id = min(ahead)
        while self._position < key_id:
            e = self.ledger.get(self._position)
            if e is None:
                break
            fs = self._frames.get(self._position)
            if fs is not None and fs.complete and self._decodable:
                self._play(e, fs, now)
            else:
                self._skip(e, fs, SKIP_RESYNC, now)
            self._position += 1
            self._turn_start = now
        return True

    def _play(self, entry: LedgerEntry, fs: _FrameState, now: SimTime) -> None:
        target = self._target(entry)
        self._finish(entry, now, target)
        fs.resolved = True
        playout = now + ms_to_us(self.config.decode_latency_ms)
        pkt = fs.completing_packet
        processing = entry.encode_done_time - entry.capture_time
        queuing = pkt.link_start - entry.encode_done_time
        transmission = pkt.arrival_time - pkt.link_start
        decoding = playout - pkt.arrival_time
        self.stats.frames_played += 1
        self.stats.packets_expected += entry.packet_count
        if entry.is_keyframe:
            self._decodable = True
            self._resync_needed = False
            self._missing.drop_range(0, entry.first_ext_seq)
        self._complete_keyframes.discard(entry.frame_id)
        if self.config.record_releases:
            self.releases.append((now, entry.frame_id, True))
        if self.on_frame_played is not None:
            self.on_frame_played(PlayedFrame(
                frame_id=entry.frame_id,
                capture_time=entry.capture_time,
                resolve_time=now,
                playout_time=playout,
                frame_bytes=entry.frame_bytes,
                is_keyframe=entry.is_keyframe,
                processing_us=processing,
                queuing_us=queuing,
                transmission_us=transmission,
                decoding_us=decoding,
            ))

    def _skip(self, entry: LedgerEntry, fs: _FrameState | None, reason: str,
              now: SimTime) -> None:
        target = self._target(entry)
        self._finish(entry, now, target)
        if fs is None:
            fs = _FrameState(entry.frame_id, entry.first_ext_seq,
                             entry.packet_count, entry.is_keyframe)
            self._frames[entry.frame_id] = fs
        fs.resolved = True
        received = len(fs.received)
        lost = entry.packet_count - received
        self.stats.frames_skipped += 1
        self.stats.skip_reasons[reason] += 1
        self.stats.packets_expected += entry.packet_count
        self.stats.packets_lost_at_playout += lost
        self._complete_keyframes.discard(entry.frame_id)
        if entry.is_keyframe:
            self._decodable = False
        backlog = self._max_announced - entry.frame_id
        if not self._decodable or \
                (reason == SKIP_GIVE_UP and
                 backlog >= self.config.resync_backlog_frames):
            self._resync_needed = True
        self._maybe_request_keyframe(now)
        if self.config.record_releases:
            self.releases.append((now, entry.frame_id, False))
        if self.on_frame_skipped is not None:
            self.on_frame_skipped(SkippedFrame(
                frame_id=entry.frame_id,
                capture_time=entry.capture_time,
                resolve_time=now,
                reason=reason,
                packets_lost=lost,
                packets_received=received,
                is_keyframe=entry.is_keyframe,
            ))

    def _finish(self, entry: LedgerEntry, now: SimTime,
                target: SimTime) -> None:
        waited = max(0, now - max(target, self._turn_start))
        if waited > 0:
            self.stats.stall_us += waited
            if self.on_stall is not None:
                self.on_stall(waited, now)
        if now > target:
            self._offset_us += now - target
        self._missing.drop_range(entry.first_ext_seq,
                                 entry.first_ext_seq + entry.packet_count)

    def _maybe_request_keyframe(self, now: SimTime) -> None:
        if not self.config.keyframe_request_enabled:
            return
        if not self._resync_needed:
            return
        interval = ms_to_us(self.config.keyframe_request_interval_ms)
        if self._last_keyframe_request is not None and \
                now - self._last_keyframe_request < interval:
            return
        self._last_keyframe_request = now
        self.stats.keyframe_requests += 1
        if self.send_keyframe_request is not None:
            self.send_keyframe_request()

    # ------------------------------------------------------------------ state

    @property
    def playout_position(self) -> int:
        return self._position

    @property
    def current_offset_us(self) -> SimTime:
        return self._offset_us

    @property
    def missing_count(self) -> int:
        return len(self._missing)
