"""Abstract constant-bitrate video source.

Frames are emitted on a fixed capture cadence and sized so that the byte
budget of the live target bitrate is honored exactly over time: the integer
rounding remainder is carried from frame to frame instead of being dropped,
so there is no cumulative drift. Keyframes borrow budget (ratio x the carried
base size) and the overdraft is repaid by the following frames.
"""

from __future__ import annotations

from dataclasses import dataclass

from .engine import ConfigError, Engine, RngStream, SimTime, US_PER_S


@dataclass
class EncoderConfig:
    fps: int = 20
    start_bitrate_bps: int = 1_000_000
    min_bitrate_bps: int = 400_000
    max_bitrate_bps: int = 10_000_000
    keyframe_interval: int | None = None  # None: only frame 0 is a keyframe
    keyframe_ratio: float = 4.0
    encode_latency_us: int = 1_000
    bitrate_jitter: float = 0.0

    def validate(self) -> None:
        if self.fps <= 0:
            raise ConfigError(f"encoder.fps must be > 0, got {self.fps}")
        if self.min_bitrate_bps <= 0 or self.max_bitrate_bps < self.min_bitrate_bps:
            raise ConfigError(
                "encoder bitrate bounds invalid: "
                f"[{self.min_bitrate_bps}, {self.max_bitrate_bps}]"
            )
        if not (self.min_bitrate_bps <= self.start_bitrate_bps <= self.max_bitrate_bps):
            raise ConfigError(
                f"encoder.start_bitrate_bps {self.start_bitrate_bps} outside "
                f"[{self.min_bitrate_bps}, {self.max_bitrate_bps}]"
            )
        if self.keyframe_interval is not None and self.keyframe_interval < 1:
            raise ConfigError("encoder.keyframe_interval must be >= 1 or null")
        if self.keyframe_ratio < 1.0:
            raise ConfigError("encoder.keyframe_ratio must be >= 1")
        if self.encode_latency_us < 0:
            raise ConfigError("encoder.encode_latency_us must be >= 0")
        if not (0.0 <= self.bitrate_jitter < 1.0):
            raise ConfigError("encoder.bitrate_jitter must be in [0, 1)")


@dataclass(slots=True)
class MediaFrame:
    frame_id: int
    capture_time: SimTime
    encode_done_time: SimTime
    size: int  # payload bytes before packetization
    is_keyframe: bool


class VideoSource:
    """Emits MediaFrames, each delivered to on_frame at its encode-done time."""

    def __init__(self, engine: Engine, config: EncoderConfig, on_frame,
                 jitter_rng: RngStream | None = None):
        config.validate()
        self._engine = engine
        self._config = config
        self._on_frame = on_frame
        self._jitter_rng = jitter_rng
        self._rate = config.start_bitrate_bps
        self._frame_id = 0
        self._force_keyframe = False
        # Budget carry: within one rate epoch, cumulative target bytes after k
        # frames is rate*k // (8*fps); the difference to what was actually
        # emitted is carried into the next frame.
        self._epoch_frames = 0
        self._epoch_emitted = 0
        self.frames_emitted = 0

    @property
    def target_bitrate_bps(self) -> int:
        return self._rate

    def start(self) -> None:
        self._engine.schedule(0, "media-capture", self._capture)

    def set_target_bitrate(self, rate_bps: int) -> int:
        """Clamp to the configured bounds and apply from the next frame on.

        Returns the rate actually applied. Setting the current rate again is a
        no-op (the budget carry is not reset).
        """
        if rate_bps <= 0:
            raise ConfigError(f"target bitrate must be > 0, got {rate_bps}")
        c = self._config
        applied = min(max(int(rate_bps), c.min_bitrate_bps), c.max_bitrate_bps)
        if applied != self._rate:
            self._rate = applied
            self._epoch_frames = 0
            self._epoch_emitted = 0
        return applied

    def force_keyframe(self) -> None:
        self._force_keyframe = True

    def _is_keyframe(self, frame_id: int) -> bool:
        if self._force_keyframe:
            return True
        interval = self._config.keyframe_interval
        if interval is None:
            return frame_id == 0
        return frame_id % interval == 0

    def _capture(self) -> None:
        c = self._config
        now = self._engine.clock
        self._epoch_frames += 1
        target_total = self._rate * self._epoch_frames // (8 * c.fps)
        base = target_total - self._epoch_emitted
        key = self._is_keyframe(self._frame_id)
        self._force_keyframe = False
        size = int(round(base * c.keyframe_ratio)) if key else base
        if c.bitrate_jitter > 0.0 and self._jitter_rng is not None:
            size = int(round(size * (1.0 + self._jitter_rng.uniform(
                -c.bitrate_jitter, c.bitrate_jitter))))
        size = max(size, 1)
        self._epoch_emitted += size

        frame = MediaFrame(
            frame_id=self._frame_id,
            capture_time=now,
            encode_done_time=now + c.encode_latency_us,
            size=size,
            is_keyframe=key,
        )
        self._frame_id += 1
        self.frames_emitted += 1
        self._engine.schedule(frame.encode_done_time, "media-encoded", self._on_frame, frame)
        next_capture = self._frame_id * US_PER_S // c.fps
        self._engine.schedule(next_capture, "media-capture", self._capture)
