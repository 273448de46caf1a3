"""Deterministic discrete-event core.

The whole simulator runs on an integer microsecond clock. Events fire in
(fire_time, insertion_index) order, so two events scheduled for the same
instant run in the order they were scheduled and a run is reproducible down
to the byte. Randomness is only available through named streams: each
stochastic process asks the engine for its own stream, and identical
(seed, stream_id) pairs produce identical draw sequences on every platform.
"""

from __future__ import annotations

import heapq
import random
from dataclasses import dataclass

# Simulation time: microseconds since run start, always an int.
SimTime = int

US_PER_MS = 1_000
US_PER_S = 1_000_000


def ms_to_us(value: float) -> SimTime:
    return int(round(value * US_PER_MS))


def s_to_us(value: float) -> SimTime:
    return int(round(value * US_PER_S))


class SimulationError(RuntimeError):
    """Engine-level contract violation: scheduling into the past, a handler
    crash, or a broken internal invariant. Never caught inside the simulator."""


class ConfigError(ValueError):
    """Invalid configuration value, scenario file, or distribution parameter."""


class EventHandle:
    """Returned by schedule(); cancel() is the only supported mutation."""

    __slots__ = ("fire_time", "index", "kind", "fn", "args", "cancelled")

    def __init__(self, fire_time: SimTime, index: int, kind: str, fn, args):
        self.fire_time = fire_time
        self.index = index
        self.kind = kind
        self.fn = fn
        self.args = args
        self.cancelled = False

    def cancel(self) -> None:
        self.cancelled = True

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        state = "cancelled" if self.cancelled else "pending"
        return f"<EventHandle {self.kind} @{self.fire_time}us #{self.index} {state}>"


@dataclass
class RunResult:
    clock: SimTime
    events_processed: int


class RngStream:
    """One independent random stream per stochastic process.

    Seeding: ``random.Random(f"{seed}/{stream_id}")``. CPython seeds string
    arguments via SHA-512, which is stable across platforms and unaffected by
    hash randomization, so streams replay exactly everywhere.
    """

    __slots__ = ("seed", "stream_id", "_rng")

    def __init__(self, seed: int, stream_id: str):
        self.seed = seed
        self.stream_id = stream_id
        self._rng = random.Random(f"{seed}/{stream_id}")

    def uniform(self, low: float, high: float) -> float:
        if not (low <= high):
            raise ConfigError(f"uniform({low}, {high}): requires low <= high")
        return self._rng.uniform(low, high)

    def integer_uniform(self, low: int, high: int) -> int:
        if not (low <= high):
            raise ConfigError(f"integer_uniform({low}, {high}): requires low <= high")
        return self._rng.randint(low, high)

    def exponential(self, mean: float) -> float:
        if not mean > 0:
            raise ConfigError(f"exponential(mean={mean}): mean must be > 0")
        return self._rng.expovariate(1.0 / mean)

    def bernoulli(self, p: float) -> bool:
        if not (0.0 <= p <= 1.0):
            raise ConfigError(f"bernoulli(p={p}): p must be in [0, 1]")
        # random() < p is exact at both endpoints: random() is in [0, 1).
        return self._rng.random() < p

    def getrandbytes(self, n: int) -> bytes:
        return self._rng.randbytes(n)


class Engine:
    """Single-threaded run-to-completion event loop.

    The engine owns no global state, so separate instances are fully
    independent and an instance may be handed between threads as long as
    only one thread drives it at a time.
    """

    def __init__(self, seed: int):
        self.seed = seed
        self.clock: SimTime = 0
        self.events_processed = 0
        self._heap: list = []
        self._counter = 0
        self._streams: dict[str, RngStream] = {}

    @property
    def now(self) -> SimTime:
        return self.clock

    def stream(self, stream_id: str) -> RngStream:
        st = self._streams.get(stream_id)
        if st is None:
            st = RngStream(self.seed, stream_id)
            self._streams[stream_id] = st
        return st

    def schedule(self, at: SimTime, kind: str, fn, *args) -> EventHandle:
        if at < self.clock:
            raise SimulationError(
                f"event {kind!r} scheduled at {at}us, before current clock {self.clock}us"
            )
        handle = EventHandle(at, self._counter, kind, fn, args)
        self._counter += 1
        heapq.heappush(self._heap, (at, handle.index, handle))
        return handle

    def schedule_in(self, delay: SimTime, kind: str, fn, *args) -> EventHandle:
        if delay < 0:
            raise SimulationError(f"event {kind!r} scheduled with negative delay {delay}us")
        return self.schedule(self.clock + delay, kind, fn, *args)

    def run_until(self, end: SimTime) -> RunResult:
        """Process every event with fire_time <= end; afterwards clock == end."""
        if end < self.clock:
            raise SimulationError(f"run_until({end}) is before current clock {self.clock}")
        heap = self._heap
        pop = heapq.heappop
        while heap and heap[0][0] <= end:
            fire_time, _, handle = pop(heap)
            if handle.cancelled:
                continue
            self.clock = fire_time
            self.events_processed += 1
            try:
                handle.fn(*handle.args)
            except SimulationError:
                raise
            except Exception as exc:
                raise SimulationError(
                    f"handler for event {handle.kind!r} at t={fire_time}us failed: {exc!r}"
                ) from exc
        self.clock = end
        return RunResult(self.clock, self.events_processed)

    def pending(self) -> int:
        """Number of not-yet-cancelled events still queued."""
        return sum(1 for _, _, h in self._heap if not h.cancelled)
