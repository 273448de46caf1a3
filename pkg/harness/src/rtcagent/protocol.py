"""Socket client for the rtcnetlab control bridge, plus a process manager.

The bridge speaks newline-delimited JSON over a local stream socket:
the server greets with hello, the client sends reset to start an episode,
every obs is answered by exactly one act, and the act answering the final
observation is answered by an end message carrying the run summary. The
client here enforces that lock-step discipline and can record every wire
line it sends and receives, byte for byte, so a (scenario, seed, actions)
triple can be replayed and compared against the original observation log.

SimulatorProcess launches the simulator CLI in bridge-server mode as a
child process on a loopback port; nothing in this package imports the
simulator's internals.
"""

from __future__ import annotations

import json
import socket
import subprocess
import sys
import time

PROTOCOL_VERSION = 1


class BridgeDisconnect(ConnectionError):
    """The bridge socket closed or failed while a reply was expected."""


class BridgeProtocolError(RuntimeError):
    """The bridge replied with an error message or an unexpected type."""


def encode_line(msg: dict) -> bytes:
    """Canonical one-line serialization, matching the bridge's encoding."""
    return (json.dumps(msg, sort_keys=True, separators=(",", ":")) + "\n") \
        .encode("utf-8")


class BridgeClient:
    """Lock-step client for one bridge connection.

    With record=True the exact bytes of every line sent and received are
    kept in sent_lines / received_lines (newline included), in order.
    """

    def __init__(self, host: str, port: int, *, record: bool = False,
                 connect_timeout_s: float = 10.0):
        self.host = host
        self.port = port
        self.record = record
        self.sent_lines: list[bytes] = []
        self.received_lines: list[bytes] = []
        self._sock: socket.socket | None = None
        self._buffer = b""
        self._connect_timeout_s = connect_timeout_s

    # ------------------------------------------------------------ lifecycle

    def connect(self) -> dict:
        """Open the socket and consume the hello greeting."""
        self._sock = socket.create_connection(
            (self.host, self.port), timeout=self._connect_timeout_s)
        self._sock.settimeout(None)
        hello = self._read_message()
        if hello.get("type") != "hello" or hello.get("v") != PROTOCOL_VERSION:
            raise BridgeProtocolError(f"unexpected greeting: {hello}")
        return hello

    def close(self) -> None:
        if self._sock is not None:
            try:
                self._sock.close()
            finally:
                self._sock = None

    def __enter__(self):
        self.connect()
        return self

    def __exit__(self, *exc):
        self.close()

    # ------------------------------------------------------------- protocol

    def reset(self, scenario: str, seed: int, *,
              duration_s: float | None = None,
              decision_interval_s: float = 1.0) -> dict:
        """Start an episode; returns the first observation message."""
        msg = {"type": "reset", "scenario": scenario, "seed": seed,
               "decision_interval_s": decision_interval_s}
        if duration_s is not None:
            msg["duration_s"] = duration_s
        reply = self.request(msg)
        if reply.get("type") != "obs":
            raise BridgeProtocolError(f"reset answered with {reply}")
        return reply

    def act(self, episode_id: int, step_id: int,
            target_bitrate_bps: float) -> dict:
        """Answer the pending observation; returns the next obs or end."""
        reply = self.request({
            "type": "act", "episode_id": episode_id, "step_id": step_id,
            "target_bitrate_bps": target_bitrate_bps,
        })
        if reply.get("type") not in ("obs", "end"):
            raise BridgeProtocolError(f"act answered with {reply}")
        return reply

    def request(self, msg: dict) -> dict:
        """Send one message and read one reply; raises on error replies."""
        reply = self.exchange_raw(encode_line(msg))
        if reply.get("type") == "error":
            raise BridgeProtocolError(reply.get("message", "bridge error"))
        return reply

    def exchange_raw(self, line: bytes) -> dict:
        """Send a pre-encoded line verbatim and read one reply.

        Replays use this so the retransmitted stimulus is byte-identical
        to the recorded one.
        """
        if self._sock is None:
            raise BridgeDisconnect("not connected")
        if self.record:
            self.sent_lines.append(line)
        try:
            self._sock.sendall(line)
        except OSError as exc:
            raise BridgeDisconnect(f"send failed: {exc}") from exc
        return self._read_message()

    # ------------------------------------------------------------- internals

    def _read_message(self) -> dict:
        line = self._read_line()
        if self.record:
            self.received_lines.append(line)
        return json.loads(line)

    def _read_line(self) -> bytes:
        while b"\n" not in self._buffer:
            try:
                chunk = self._sock.recv(65536)
            except OSError as exc:
                raise BridgeDisconnect(f"recv failed: {exc}") from exc
            if not chunk:
                raise BridgeDisconnect("bridge closed the connection")
            self._buffer += chunk
        line, self._buffer = self._buffer.split(b"\n", 1)
        return line + b"\n"


def free_port(host: str = "127.0.0.1") -> int:
    """Ask the OS for an unused loopback port."""
    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as probe:
        probe.bind((host, 0))
        return probe.getsockname()[1]


class SimulatorProcess:
    """Runs the simulator CLI as a bridge server on a loopback port."""

    def __init__(self, *, host: str = "127.0.0.1", port: int | None = None,
                 action_timeout_s: float | None = None):
        self.host = host
        self.port = port if port is not None else free_port(host)
        self.action_timeout_s = action_timeout_s
        self._proc: subprocess.Popen | None = None

    def start(self) -> "SimulatorProcess":
        cmd = [sys.executable, "-m", "rtcnetlab.cli", "run",
               "--scenario", "easy",
               "--bridge-listen", f"{self.host}:{self.port}"]
        if self.action_timeout_s is not None:
            cmd += ["--action-timeout", str(self.action_timeout_s)]
        self._proc = subprocess.Popen(
            cmd, stdout=subprocess.DEVNULL, stderr=subprocess.DEVNULL)
        self._wait_until_listening()
        return self

    def stop(self) -> None:
        if self._proc is not None:
            self._proc.terminate()
            try:
                self._proc.wait(timeout=10)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()
            self._proc = None

    def alive(self) -> bool:
        return self._proc is not None and self._proc.poll() is None

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()

    def client(self, *, record: bool = False) -> BridgeClient:
        return BridgeClient(self.host, self.port, record=record)

    def _wait_until_listening(self, timeout_s: float = 20.0) -> None:
        deadline = time.monotonic() + timeout_s
        while time.monotonic() < deadline:
            if self._proc.poll() is not None:
                raise BridgeDisconnect(
                    f"simulator exited with code {self._proc.returncode} "
                    "before listening")
            try:
                socket.create_connection((self.host, self.port),
                                         timeout=0.25).close()
                return
            except OSError:
                time.sleep(0.05)
        raise BridgeDisconnect(
            f"simulator did not listen on {self.host}:{self.port} "
            f"within {timeout_s}s")
