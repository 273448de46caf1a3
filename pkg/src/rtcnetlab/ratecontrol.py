"""Sender-side rate control.

GccController implements a delay-gradient congestion controller of the
family used for real-time media: transport-wide feedback is grouped into
short departure windows, the per-group one-way delay variation feeds a
scalar Kalman filter, an adaptive-threshold detector classifies the queue
state, and an AIMD machine moves the target between multiplicative probing
(8 %/s, far from the knee), additive increase (about one packet per
response time, near the knee), and multiplicative decrease (0.85 of the
measured receive rate). A separate loss rule reacts to receiver reports:
heavy loss (> 10 %) cuts the rate, clean intervals (< 2 %) allow a 5 %
raise. All rates are clamped to [min_bps, max_bps].

FixedRateController, ScriptedRateController, and ExternalRateController
share the same surface so sessions can swap strategies.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

from .engine import ConfigError, SimTime, US_PER_MS, US_PER_S

STATE_HOLD = "hold"
STATE_INCREASE = "increase"
STATE_DECREASE = "decrease"

SIGNAL_NORMAL = "normal"
SIGNAL_OVERUSE = "overuse"
SIGNAL_UNDERUSE = "underuse"


@dataclass(slots=True)
class GccConfig:
    start_bps: int = 1_000_000
    min_bps: int = 400_000
    max_bps: int = 10_000_000
    group_window_us: int = 5_000
    kalman_process_noise: float = 1e-3
    kalman_initial_error: float = 0.1
    kalman_initial_noise_var: float = 5.0
    kalman_noise_var_floor: float = 0.1
    kalman_noise_alpha: float = 0.998
    threshold_initial_ms: float = 12.5
    threshold_min_ms: float = 6.0
    threshold_max_ms: float = 600.0
    threshold_gain_up: float = 0.0087
    threshold_gain_down: float = 0.039
    threshold_skip_margin_ms: float = 15.0
    threshold_dt_cap_ms: float = 100.0
    overuse_time_ms: float = 10.0
    beta: float = 0.85
    eta_per_second: float = 1.08
    additive_floor_bits: float = 800.0
    response_extra_ms: float = 100.0
    rate_window_us: int = 500_000
    increase_cap_headroom: float = 1.5
    increase_cap_extra_bps: float = 10_000.0
    near_max_alpha: float = 0.05
    near_max_sigmas: float = 3.0
    loss_cut_threshold: float = 0.10
    loss_raise_threshold: float = 0.02
    loss_raise_factor: float = 1.05

    def validate(self) -> None:
        if not (0 < self.min_bps <= self.start_bps <= self.max_bps):
            raise ConfigError("rate bounds must satisfy "
                              "0 < min <= start <= max")
        if not 0 < self.beta < 1:
            raise ConfigError("beta must be in (0, 1)")
        if self.eta_per_second <= 1:
            raise ConfigError("eta_per_second must exceed 1")
        if self.group_window_us <= 0 or self.rate_window_us <= 0:
            raise ConfigError("windows must be positive")


class DelayGradientEstimator:
    """Scalar Kalman filter over per-group delay variation, in milliseconds."""

    __slots__ = ("_q", "_error", "_noise_var", "_noise_alpha",
                 "_noise_floor", "estimate_ms")

    def __init__(self, config: GccConfig):
        self._q = config.kalman_process_noise
        self._error = config.kalman_initial_error
        self._noise_var = config.kalman_initial_noise_var
        self._noise_alpha = config.kalman_noise_alpha
        self._noise_floor = config.kalman_noise_var_floor
        self.estimate_ms = 0.0

    def update(self, delta_ms: float, stable: bool = True) -> float:
        e_prior = self._error + self._q
        k = e_prior / (e_prior + self._noise_var)
        z = delta_ms - self.estimate_ms
        self.estimate_ms += k * z
        self._error = (1.0 - k) * e_prior
        if stable:
            # Adapt the noise estimate only while the queue looks idle;
            # a building queue must register as signal, not as noise.
            # Outliers are clamped to three sigma before entering the
            # average so single late packets cannot blow it up.
            sigma = math.sqrt(self._noise_var)
            z_clamped = max(-3.0 * sigma, min(3.0 * sigma, z))
            self._noise_var = max(
                self._noise_alpha * self._noise_var
                + (1.0 - self._noise_alpha) * z_clamped * z_clamped,
                self._noise_floor)
        return self.estimate_ms


class OveruseDetector:
    """Adaptive-threshold classifier over the delay-gradient estimate."""

    __slots__ = ("_cfg", "threshold_ms", "_time_over_ms", "_over_count",
                 "_prev_estimate", "signal")

    def __init__(self, config: GccConfig):
        self._cfg = config
        self.threshold_ms = config.threshold_initial_ms
        self._time_over_ms = -1.0
        self._over_count = 0
        self._prev_estimate = 0.0
        self.signal = SIGNAL_NORMAL

    def update(self, estimate_ms: float, dt_ms: float) -> str:
        cfg = self._cfg
        if estimate_ms > self.threshold_ms:
            if self._time_over_ms < 0:
                self._time_over_ms = dt_ms / 2.0
            else:
                self._time_over_ms += dt_ms
            self._over_count += 1
            if self._time_over_ms > cfg.overuse_time_ms and \
                    self._over_count > 1 and \
                    estimate_ms >= self._prev_estimate:
                self.signal = SIGNAL_OVERUSE
        elif estimate_ms < -self.threshold_ms:
            self._reset_overuse()
            self.signal = SIGNAL_UNDERUSE
        else:
            self._reset_overuse()
            self.signal = SIGNAL_NORMAL
        self._adapt_threshold(estimate_ms, dt_ms)
        self._prev_estimate = estimate_ms
        return self.signal

    def _reset_overuse(self) -> None:
        self._time_over_ms = -1.0
        self._over_count = 0

    def _adapt_threshold(self, estimate_ms: float, dt_ms: float) -> None:
        cfg = self._cfg
        abs_m = abs(estimate_ms)
        if abs_m > self.threshold_ms + cfg.threshold_skip_margin_ms:
            return
        gain = cfg.threshold_gain_up if abs_m >= self.threshold_ms \
            else cfg.threshold_gain_down
        dt = min(dt_ms, cfg.threshold_dt_cap_ms)
        self.threshold_ms += dt * gain * (abs_m - self.threshold_ms)
        self.threshold_ms = max(cfg.threshold_min_ms,
                                min(cfg.threshold_max_ms, self.threshold_ms))


class _DepartureGroups:
    """Splits acked packets into departure-time windows and yields the
    (arrival_delta_us, departure_delta_us) pair between consecutive groups."""

    __slots__ = ("_window", "_first_send", "_last_send", "_last_arrival",
                 "_prev_last_send", "_prev_last_arrival")

    def __init__(self, window_us: int):
        self._window = window_us
        self._first_send: SimTime | None = None
        self._last_send: SimTime = 0
        self._last_arrival: SimTime = 0
        self._prev_last_send: SimTime | None = None
        self._prev_last_arrival: SimTime | None = None

    def add(self, send_time: SimTime, arrival_time: SimTime):
        """Returns a delta pair when a group closes, else None."""
        if self._first_send is None:
            self._first_send = send_time
            self._last_send = send_time
            self._last_arrival = arrival_time
            return None
        if send_time - self._first_send > self._window:
            result = None
            if self._prev_last_send is not None:
                result = (self._last_arrival - self._prev_last_arrival,
                          self._last_send - self._prev_last_send)
            self._prev_last_send = self._last_send
            self._prev_last_arrival = self._last_arrival
            self._first_send = send_time
            self._last_send = send_time
            self._last_arrival = arrival_time
            return result
        if send_time > self._last_send:
            self._last_send = send_time
        if arrival_time > self._last_arrival:
            self._last_arrival = arrival_time
        return None


class _ReceiveRateTracker:
    """Acked throughput over a sliding window of reconstructed arrivals."""

    __slots__ = ("_window", "_samples", "_bytes", "_count", "_latest")

    def __init__(self, window_us: int):
        self._window = window_us
        self._samples = deque()
        self._bytes = 0
        self._count = 0
        self._latest = 0

    def add(self, arrival_us: SimTime, size_bytes: int) -> None:
        self._samples.append((arrival_us, size_bytes))
        self._bytes += size_bytes
        self._count += 1
        if arrival_us > self._latest:
            self._latest = arrival_us
        floor = self._latest - self._window
        while self._samples and self._samples[0][0] < floor:
            _, sz = self._samples.popleft()
            self._bytes -= sz
            self._count -= 1

    def rate_bps(self) -> float | None:
        if self._count < 2:
            return None
        # Divide by the span actually covered, not the nominal window, so
        # the estimate is unbiased while the window is still filling. The
        # first sample only anchors the span; its bytes sit outside it.
        first_arrival, first_size = self._samples[0]
        span = self._latest - first_arrival
        if span <= 0:
            return None
        return (self._bytes - first_size) * 8 * US_PER_S / span

    def avg_packet_bits(self) -> float:
        if self._count == 0:
            return 8.0 * 1200.0
        return self._bytes * 8.0 / self._count


@dataclass(slots=True)
class RateDecision:
    time_us: SimTime
    target_bps: int
    action: str            # "increase" | "hold" | "decrease"
    delay_estimate_bps: float
    measured_bps: float | None
    loss_fraction: float
    gradient_ms: float
    threshold_ms: float


def loss_update(delay_estimate_bps: float, loss_fraction: float,
                cap_bps: float, cut_threshold: float = 0.10,
                raise_threshold: float = 0.02,
                raise_factor: float = 1.05) -> float:
    """Three-branch loss rule applied on top of the delay-based estimate."""
    if loss_fraction > cut_threshold:
        return delay_estimate_bps * (1.0 - 0.5 * loss_fraction)
    if loss_fraction < raise_threshold:
        return min(raise_factor * delay_estimate_bps, cap_bps)
    return delay_estimate_bps


class GccController:
    """Combines the delay detector, AIMD machine, and loss rule.

    Call on_packet_sent() for every packet handed to the network,
    on_twcc_feedback() for each transport-wide report, and
    on_receiver_report() for each receiver report; both feedback paths end
    in decide(), which recomputes the target as
    clamp(loss_update(aimd(delay estimate))). Reads target_bps for the
    current target; set on_rate_change / on_decision to observe updates.
    """

    def __init__(self, config: GccConfig | None = None):
        self.config = config or GccConfig()
        self.config.validate()
        cfg = self.config
        self.target_bps = float(cfg.start_bps)
        self.delay_estimate_bps = float(cfg.start_bps)
        self.region = STATE_HOLD
        self.on_rate_change = None
        self.on_decision = None

        self._estimator = DelayGradientEstimator(cfg)
        self._detector = OveruseDetector(cfg)
        self._groups = _DepartureGroups(cfg.group_window_us)
        self._rate = _ReceiveRateTracker(cfg.rate_window_us)
        self._sent: dict[int, tuple] = {}
        self._last_aimd_us: SimTime | None = None
        self._rtt_ms = 200.0
        self._loss_fraction = 0.0
        self._seen_feedback = False
        self._avg_max_bps: float | None = None
        self._var_max: float = 0.0

    # --------------------------------------------------------------- inputs

    def on_packet_sent(self, transport_seq: int, send_time: SimTime,
                       wire_size: int) -> None:
        self._sent[transport_seq] = (send_time, wire_size)

    def on_rtt_sample(self, rtt_us: SimTime) -> None:
        self._rtt_ms = rtt_us / US_PER_MS

    def on_twcc_feedback(self, feedback, now: SimTime) -> None:
        saw_arrival = False
        for seq, arrival_us in feedback.arrivals():
            sent = self._sent.pop(seq, None)
            if sent is None:
                continue
            send_time, size = sent
            self._rate.add(arrival_us, size)
            saw_arrival = True
            deltas = self._groups.add(send_time, arrival_us)
            if deltas is None:
                continue
            arrival_delta, departure_delta = deltas
            if departure_delta <= 0 or arrival_delta < 0:
                continue
            d_ms = (arrival_delta - departure_delta) / US_PER_MS
            stable = self._detector.signal == SIGNAL_NORMAL
            estimate = self._estimator.update(d_ms, stable)
            self._detector.update(estimate, arrival_delta / US_PER_MS)
        for seq, received in feedback.statuses():
            if not received:
                self._sent.pop(seq, None)
        if saw_arrival:
            self._seen_feedback = True
            self.decide(now)

    def on_receiver_report(self, fraction_lost: float, now: SimTime) -> None:
        self._loss_fraction = fraction_lost
        if self._seen_feedback:
            self.decide(now, update_aimd=False)

    # ----------------------------------------------------------------- AIMD

    def decide(self, now: SimTime, update_aimd: bool = True) -> RateDecision:
        if not self._seen_feedback:
            decision = RateDecision(now, int(self.target_bps), STATE_HOLD,
                                    self.delay_estimate_bps, None,
                                    self._loss_fraction, 0.0,
                                    self._detector.threshold_ms)
            if self.on_decision is not None:
                self.on_decision(decision)
            return decision
        action = STATE_HOLD
        if update_aimd:
            action = self._aimd_update(now)
        cfg = self.config
        target = loss_update(self.delay_estimate_bps, self._loss_fraction,
                             float(cfg.max_bps), cfg.loss_cut_threshold,
                             cfg.loss_raise_threshold, cfg.loss_raise_factor)
        self._apply_target(target, now)
        decision = RateDecision(now, int(self.target_bps), action,
                                self.delay_estimate_bps,
                                self._rate.rate_bps(), self._loss_fraction,
                                self._estimator.estimate_ms,
                                self._detector.threshold_ms)
        if self.on_decision is not None:
            self.on_decision(decision)
        return decision

    def _aimd_update(self, now: SimTime) -> str:
        signal = self._detector.signal
        dt_us = 0 if self._last_aimd_us is None else now - self._last_aimd_us
        self._last_aimd_us = now
        measured = self._rate.rate_bps()
        action = STATE_HOLD

        if signal == SIGNAL_OVERUSE:
            if measured is not None:
                self._update_near_max(measured)
                # Cut from the measured throughput, never upward: right
                # after a queue flush the measured window can exceed the
                # current estimate, and a decrease must not raise the rate.
                new = min(self.config.beta * measured,
                          self.delay_estimate_bps)
                self.delay_estimate_bps = self._bounded(new)
                action = STATE_DECREASE
            self.region = STATE_HOLD
        elif signal == SIGNAL_UNDERUSE:
            self.region = STATE_HOLD
        else:
            if self.region == STATE_HOLD:
                self.region = STATE_INCREASE
            if self.region == STATE_INCREASE:
                self.delay_estimate_bps = self._bounded(
                    self._increased_rate(dt_us, measured))
                action = STATE_INCREASE
        return action

    def _increased_rate(self, dt_us: SimTime, measured: float | None) -> float:
        cfg = self.config
        dt_s = min(dt_us / US_PER_S, 1.0)
        current = self.delay_estimate_bps
        if self._multiplicative_region(measured):
            new = current * (cfg.eta_per_second ** dt_s)
        else:
            response_ms = self._rtt_ms + cfg.response_extra_ms
            alpha = 0.5 * min(dt_us / US_PER_MS / response_ms, 1.0)
            new = current + max(cfg.additive_floor_bits,
                                alpha * self._rate.avg_packet_bits())
        # The throughput cap limits growth; an increase never moves down.
        return max(current, min(new, self._increase_cap()))

    def _bounded(self, bps: float) -> float:
        return max(float(self.config.min_bps),
                   min(float(self.config.max_bps), bps))

    def _multiplicative_region(self, measured: float | None) -> bool:
        if self._avg_max_bps is None:
            return True
        if measured is None:
            return False
        sigma = math.sqrt(self._var_max)
        if measured > self._avg_max_bps + self.config.near_max_sigmas * sigma:
            self._avg_max_bps = None
            return True
        return False

    def _update_near_max(self, measured: float) -> None:
        cfg = self.config
        if self._avg_max_bps is None:
            self._avg_max_bps = measured
            self._var_max = (0.1 * measured) ** 2
            return
        sigma = math.sqrt(self._var_max)
        if measured > self._avg_max_bps + cfg.near_max_sigmas * sigma:
            self._avg_max_bps = measured
            self._var_max = (0.1 * measured) ** 2
            return
        alpha = cfg.near_max_alpha
        diff = measured - self._avg_max_bps
        self._avg_max_bps += alpha * diff
        self._var_max = max((1 - alpha) * self._var_max + alpha * diff * diff,
                            (0.01 * self._avg_max_bps) ** 2)

    def _increase_cap(self) -> float:
        measured = self._rate.rate_bps()
        if measured is None:
            return float(self.config.max_bps)
        return self.config.increase_cap_headroom * measured \
            + self.config.increase_cap_extra_bps

    def _apply_target(self, new_bps: float, now: SimTime) -> None:
        clamped = self._bounded(new_bps)
        if clamped != self.target_bps:
            self.target_bps = clamped
            if self.on_rate_change is not None:
                self.on_rate_change(int(clamped), now)

    # ------------------------------------------------------------ diagnostics

    @property
    def gradient_ms(self) -> float:
        return self._estimator.estimate_ms

    @property
    def threshold_ms(self) -> float:
        return self._detector.threshold_ms

    def measured_rate_bps(self) -> float | None:
        return self._rate.rate_bps()


class FixedRateController:
    """Holds the start rate forever."""

    def __init__(self, rate_bps: int):
        if rate_bps <= 0:
            raise ConfigError("rate_bps must be positive")
        self.target_bps = float(rate_bps)
        self.on_rate_change = None

    def on_packet_sent(self, transport_seq, send_time, wire_size) -> None:
        pass

    def on_twcc_feedback(self, feedback, now) -> None:
        pass

    def on_receiver_report(self, fraction_lost, now) -> None:
        pass

    def on_rtt_sample(self, rtt_us) -> None:
        pass


class ScriptedRateController(FixedRateController):
    """Steps through (time_s, rate_bps) pairs; the session drives ticks."""

    def __init__(self, steps: list, start_bps: int):
        super().__init__(start_bps)
        self._steps = sorted(steps)
        self._applied = 0

    def tick(self, now: SimTime) -> None:
        while self._applied < len(self._steps):
            at_s, rate = self._steps[self._applied]
            if now < int(at_s * US_PER_S):
                break
            self._applied += 1
            rate = float(rate)
            if rate != self.target_bps:
                self.target_bps = rate
                if self.on_rate_change is not None:
                    self.on_rate_change(int(rate), now)


class ExternalRateController(FixedRateController):
    """Target is set from outside (control bridge); between updates it holds."""

    def set_target(self, rate_bps: int, now: SimTime) -> None:
        rate = float(rate_bps)
        if rate != self.target_bps:
            self.target_bps = rate
            if self.on_rate_change is not None:
                self.on_rate_change(int(rate), now)
