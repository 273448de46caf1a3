"""Episodic decision environment around a session, for external agents.

The bridge runs the simulation in lock step with an outside controller:
simulation time never advances while an observation is outstanding. An
episode is (scenario, seed, duration, decision interval); reset() builds a
fresh engine, advances one interval under the start rate, and returns the
first observation. Every action answers the pending observation (echoing
its step_id), the bridge applies it and advances one interval. The action
answering the observation taken at t == duration receives the episode-end
message with the run summary: duration/interval intervals, one observation
per interval, as many actions as observations.

Action values are post-processed in this order:
  1. malformed (missing, non-numeric, NaN/inf)  -> current target retained,
     warning "malformed_action" in the next observation
  2. out of range                               -> clamped to
     [MIN_ACTION_BPS, MAX_ACTION_BPS], warning "clamped_action"
  3. dead-band: |new - current| / current <= 0.10 -> current retained
     (the normal mechanism, no warning)
so every applied change exceeds 10% relative magnitude.

Observation fields are windowed over the last decision interval except the
cumulative ones (plr_global, retransmission_rate) and rtt_ms (latest
receiver-report sample). goodput_bps counts first-delivery media payload
bytes (whether a frame eventually plays is unknowable online), so
goodput_bps <= rx_rate_bps holds by construction.

The wire protocol is newline-delimited JSON over a local stream socket,
message types hello / reset / obs / act / end / error, versioned by the
"v" field of hello. Serialization is canonical (sorted keys, no spaces),
so a recorded (scenario, seed, actions) triple replays byte-identically.
"""

from __future__ import annotations

import json
import math
import socket

from .engine import Engine, SimTime, s_to_us
from .scenario import load
from .session import Session

PROTOCOL_VERSION = 1
MIN_ACTION_BPS = 400_000
MAX_ACTION_BPS = 10_000_000
DEAD_BAND = 0.10
DEFAULT_ACTION_TIMEOUT_S = 30.0

WARN_MALFORMED = "malformed_action"
WARN_CLAMPED = "clamped_action"
WARN_TIMEOUT = "action_timeout"

OBSERVATION_FIELDS = (
    "rtt_ms", "plr_window", "plr_global", "jitter_ms",
    "retransmission_rate", "goodput_bps", "rx_rate_bps",
    "current_target_bps", "sim_time_s",
)


def encode_message(msg: dict) -> bytes:
    """Canonical one-line serialization (replays are byte-comparable)."""
    return (json.dumps(msg, sort_keys=True, separators=(",", ":")) + "\n") \
        .encode("utf-8")


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) \
        and math.isfinite(v)


class BridgeCore:
    """Episode lifecycle and action semantics, transport-agnostic.

    reset()/step() return complete protocol message dicts (obs, end, or
    error) so socket servers and in-process harnesses behave identically.
    """

    def __init__(self):
        self.session: Session | None = None
        self._engine: Engine | None = None
        self.episode_id = 0
        self.step_id = 0
        self._steps_total = 0
        self._interval_us: SimTime = 0
        self._interval_s = 1.0
        self._pending_warning: str | None = None
        self._finished = True
        self._prev = (0, 0, 0, 0)

    # ---------------------------------------------------------------- errors

    @staticmethod
    def error(message: str) -> dict:
        return {"type": "error", "message": message}

    # --------------------------------------------------------------- episode

    def reset(self, config: dict) -> dict:
        name = config.get("scenario")
        if not isinstance(name, str):
            return self.error("reset needs a scenario name")
        seed = config.get("seed", 1)
        if not isinstance(seed, int) or isinstance(seed, bool):
            return self.error("reset seed must be an integer")
        interval_s = config.get("decision_interval_s", 1.0)
        if not _is_number(interval_s) or interval_s <= 0:
            return self.error("decision_interval_s must be a positive number")
        try:
            scenario = load(name)
        except Exception as exc:
            return self.error(f"cannot load scenario: {exc}")
        duration_s = config.get("duration_s", scenario["duration_s"])
        if not _is_number(duration_s) or duration_s <= 0:
            return self.error("duration_s must be a positive number")
        steps = duration_s / interval_s
        if abs(steps - round(steps)) > 1e-9:
            return self.error("duration_s must be a multiple of "
                              "decision_interval_s")
        scenario["duration_s"] = duration_s
        if scenario["media_stop_s"] is not None and \
                scenario["media_stop_s"] > duration_s:
            scenario["media_stop_s"] = None
        scenario["controller"]["kind"] = "bridge"

        self._engine = Engine(seed)
        self.session = Session(self._engine, scenario)
        self.episode_id += 1
        self.step_id = 0
        self._steps_total = round(steps)
        self._interval_s = float(interval_s)
        self._interval_us = s_to_us(interval_s)
        self._pending_warning = None
        self._finished = False
        self._prev = (0, 0, 0, 0)
        self._advance()
        return self._observation_message()

    def step(self, message: dict) -> dict:
        """Handle an act message; returns obs, end, or error."""
        if self._finished or self.session is None:
            return self.error("no episode running; send reset first")
        if message.get("episode_id") != self.episode_id:
            return self.error(
                f"act episode_id must echo {self.episode_id}")
        if message.get("step_id") != self.step_id:
            return self.error(f"act step_id must echo {self.step_id}")
        target, warning = self._interpret(message.get("target_bitrate_bps"))
        return self._apply_and_advance(target, warning)

    def step_timeout(self) -> dict:
        """No action arrived in time: retain the bitrate, flag, continue."""
        if self._finished or self.session is None:
            return self.error("no episode running; send reset first")
        return self._apply_and_advance(None, WARN_TIMEOUT)

    # -------------------------------------------------------------- internals

    def _interpret(self, raw) -> tuple[float | None, str | None]:
        if not _is_number(raw):
            return None, WARN_MALFORMED
        if raw < MIN_ACTION_BPS or raw > MAX_ACTION_BPS:
            return float(min(max(raw, MIN_ACTION_BPS), MAX_ACTION_BPS)), \
                WARN_CLAMPED
        return float(raw), None

    def _apply_and_advance(self, target: float | None,
                           warning: str | None) -> dict:
        controller = self.session.controller
        if target is not None:
            current = controller.target_bps
            if abs(target - current) / current > DEAD_BAND:
                controller.set_target(int(target), self._engine.clock)
        self._pending_warning = warning
        self.step_id += 1
        if self.step_id >= self._steps_total:
            return self._end_message()
        self._advance()
        return self._observation_message()

    def _advance(self) -> None:
        self._engine.run_until(self._engine.clock + self._interval_us)

    def _window_counters(self) -> tuple:
        recorder = self.session.recorder
        stats = self.session.receiver.stats
        return (recorder.rx_wire_bytes, recorder.rx_media_payload_bytes,
                stats.packets_expected, stats.packets_lost_at_playout)

    def observation(self) -> dict:
        session = self.session
        recorder = session.recorder
        stats = session.receiver.stats
        cur = self._window_counters()
        prev = self._prev
        self._prev = cur
        win_rx = cur[0] - prev[0]
        win_payload = cur[1] - prev[1]
        win_expected = cur[2] - prev[2]
        win_lost = cur[3] - prev[3]
        rtx_rate = (recorder.rtx_packets_sent / recorder.media_packets_sent
                    if recorder.media_packets_sent else 0.0)
        return {
            "rtt_ms": recorder.last_rtt_ms,
            "plr_window": (win_lost / win_expected if win_expected else 0.0),
            "plr_global": (stats.packets_lost_at_playout
                           / stats.packets_expected
                           if stats.packets_expected else 0.0),
            "jitter_ms": session.rtcp_state.jitter_us / 1000.0,
            "retransmission_rate": min(1.0, rtx_rate),
            "goodput_bps": win_payload * 8 / self._interval_s,
            "rx_rate_bps": win_rx * 8 / self._interval_s,
            "current_target_bps": session.controller.target_bps,
            "sim_time_s": self._engine.clock / 1e6,
        }

    def _observation_message(self) -> dict:
        msg = {"type": "obs", "episode_id": self.episode_id,
               "step_id": self.step_id, "warning": self._pending_warning}
        msg.update(self.observation())
        return msg

    def _end_message(self) -> dict:
        self._finished = True
        # Let in-flight frames and timers settle nothing further: the run
        # already covered [0, duration]; summarize as-is.
        out = self.session.run_summary_only()
        return {"type": "end", "episode_id": self.episode_id,
                "summary": out}


class BridgeServer:
    """Serves one client at a time over a local stream socket."""

    def __init__(self, host: str, port: int,
                 action_timeout_s: float = DEFAULT_ACTION_TIMEOUT_S):
        self.host = host
        self.port = port
        self.action_timeout_s = action_timeout_s
        self.core = BridgeCore()
        self._listener: socket.socket | None = None

    def __enter__(self):
        self._listener = socket.create_server((self.host, self.port))
        return self

    def __exit__(self, *exc):
        if self._listener is not None:
            self._listener.close()
            self._listener = None

    @property
    def address(self) -> tuple:
        return self._listener.getsockname()

    def serve_once(self) -> None:
        """Accept one client and run its episodes until it disconnects."""
        conn, _ = self._listener.accept()
        try:
            self._handle(conn)
        finally:
            conn.close()

    def _handle(self, conn: socket.socket) -> None:
        conn.sendall(encode_message({"type": "hello", "v": PROTOCOL_VERSION}))
        buffer = b""
        awaiting_act = False
        while True:
            conn.settimeout(self.action_timeout_s if awaiting_act else None)
            try:
                line, buffer = self._read_line(conn, buffer)
            except socket.timeout:
                reply = self.core.step_timeout()
                conn.sendall(encode_message(reply))
                awaiting_act = reply["type"] == "obs"
                continue
            if line is None:
                return
            try:
                msg = json.loads(line)
                if not isinstance(msg, dict):
                    raise ValueError("message must be an object")
            except ValueError as exc:
                conn.sendall(encode_message(BridgeCore.error(
                    f"invalid message: {exc}")))
                continue
            kind = msg.get("type")
            if kind == "reset":
                reply = self.core.reset(msg)
            elif kind == "act":
                reply = self.core.step(msg)
            else:
                reply = BridgeCore.error(f"unknown message type {kind!r}")
            conn.sendall(encode_message(reply))
            awaiting_act = reply["type"] == "obs"

    @staticmethod
    def _read_line(conn: socket.socket, buffer: bytes):
        while b"\n" not in buffer:
            chunk = conn.recv(65536)
            if not chunk:
                return None, buffer
            buffer += chunk
        line, _, rest = buffer.partition(b"\n")
        return line.decode("utf-8"), rest


def parse_listen_address(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not port.isdigit():
        raise ValueError(
            f"listen address must be host:port, got {text!r}")
    return (host or "127.0.0.1", int(port))


def serve(address: str,
          action_timeout_s: float = DEFAULT_ACTION_TIMEOUT_S) -> None:
    host, port = parse_listen_address(address)
    with BridgeServer(host, port, action_timeout_s) as server:
        while True:
            server.serve_once()
