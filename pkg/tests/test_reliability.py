"""Retransmission gates and XOR parity repair."""

import random

import pytest
from hypothesis import given, strategies as st

from rtcnetlab.engine import ConfigError
from rtcnetlab.reliability import (FecEncoder, ReliabilityConfig,
                                   RetransmissionBuffer, repair_group,
                                   xor_payloads)
from rtcnetlab.rtp import RtpPacket


def media_packet(seq, size=1_000, frame_id=0, index=0, count=1,
                 keyframe=False, payload=None):
    return RtpPacket(stream_seq=seq, rtp_timestamp=90_000, frame_id=frame_id,
                     frame_packet_index=index, frame_packet_count=count,
                     payload_size=size, marker=(index == count - 1),
                     is_keyframe=keyframe, payload=payload)


def random_group(rng, k, keyframe=False):
    packets = []
    for i in range(k):
        size = rng.randint(1, 1_300)
        packets.append(media_packet(seq=100 + i, size=size, frame_id=7,
                                    index=i, count=k, keyframe=keyframe,
                                    payload=rng.randbytes(size)))
    return packets


# --- XOR parity ---------------------------------------------------------

def test_xor_pads_to_longest():
    assert xor_payloads([b"\x01\x02", b"\x01"]) == b"\x00\x02"
    assert xor_payloads([b"\xff"]) == b"\xff"
    assert xor_payloads([]) == b""


@given(st.lists(st.binary(min_size=0, max_size=64), min_size=1, max_size=8),
       st.data())
def test_xor_parity_recovers_any_single_member(payloads, data):
    parity = xor_payloads(payloads)
    idx = data.draw(st.integers(min_value=0, max_value=len(payloads) - 1))
    others = [p for i, p in enumerate(payloads) if i != idx]
    rebuilt = xor_payloads([parity] + others)[:len(payloads[idx])]
    assert rebuilt == payloads[idx]


# --- FEC grouping -------------------------------------------------------

def test_parity_appended_per_group():
    enc = FecEncoder(ReliabilityConfig(fec_enabled=True, fec_group_delta=10))
    rng = random.Random(3)
    out = enc.protect_frame(random_group(rng, 25))
    # Chunks of 10, 10 and 5, each followed by its parity.
    assert len(out) == 28
    assert [p.is_fec for p in out].count(True) == 3
    assert out[10].is_fec and out[21].is_fec and out[27].is_fec
    assert [p.fec_group_id for p in out if p.is_fec] == [0, 1, 2]
    assert enc.parities_built == 3


def test_keyframes_use_smaller_groups():
    enc = FecEncoder(ReliabilityConfig(fec_enabled=True, fec_group_delta=10,
                                       fec_group_key=4))
    rng = random.Random(4)
    out = enc.protect_frame(random_group(rng, 9, keyframe=True))
    parities = [p for p in out if p.is_fec]
    assert [len(p.fec_covered) for p in parities] == [4, 4, 1]


def test_groups_never_span_frames():
    enc = FecEncoder(ReliabilityConfig(fec_enabled=True, fec_group_delta=10))
    rng = random.Random(5)
    first = enc.protect_frame(random_group(rng, 7))
    second = enc.protect_frame(random_group(rng, 7))
    # A 7-packet frame flushes a partial group rather than waiting for more.
    assert [p.fec_group_id for p in first if p.is_fec] == [0]
    assert [p.fec_group_id for p in second if p.is_fec] == [1]
    assert all(p.fec_group_id == 0 for p in first)
    assert all(p.fec_group_id == 1 for p in second)


def test_parity_metadata():
    enc = FecEncoder(ReliabilityConfig(fec_enabled=True, fec_group_delta=10))
    rng = random.Random(6)
    group = random_group(rng, 5)
    parity = enc.protect_frame(group)[-1]
    assert parity.is_fec
    assert parity.payload_size == max(p.payload_size for p in group)
    assert parity.rtp_timestamp == group[-1].rtp_timestamp
    assert parity.frame_packet_count == 0
    assert len(parity.fec_covered) == 5
    assert [c.stream_seq for c in parity.fec_covered] == [
        p.stream_seq for p in group]


def test_parity_sequence_space_is_separate():
    enc = FecEncoder(ReliabilityConfig(fec_enabled=True, fec_group_delta=3))
    rng = random.Random(7)
    out = enc.protect_frame(random_group(rng, 9))
    assert [p.stream_seq for p in out if p.is_fec] == [0, 1, 2]


def test_protect_empty_frame():
    enc = FecEncoder(ReliabilityConfig(fec_enabled=True))
    assert enc.protect_frame([]) == []


# --- FEC repair ---------------------------------------------------------

def test_single_loss_repairs_byte_exact():
    rng = random.Random(858)
    for trial in range(300):
        k = rng.randint(1, 12)
        group = random_group(rng, k, keyframe=rng.random() < 0.3)
        enc = FecEncoder(ReliabilityConfig(fec_enabled=True,
                                           fec_group_delta=12,
                                           fec_group_key=12))
        parity = enc.protect_frame(group)[-1]
        lost = rng.randrange(k)
        present = {p.stream_seq: p for i, p in enumerate(group) if i != lost}
        rebuilt = repair_group(parity.fec_covered, present, parity)
        want = group[lost]
        assert rebuilt is not None
        assert rebuilt.payload == want.payload
        assert rebuilt.stream_seq == want.stream_seq
        assert rebuilt.frame_id == want.frame_id
        assert rebuilt.frame_packet_index == want.frame_packet_index
        assert rebuilt.payload_size == want.payload_size
        assert rebuilt.marker == want.marker


def test_multiple_losses_are_unrecoverable():
    rng = random.Random(859)
    for trial in range(100):
        k = rng.randint(2, 12)
        group = random_group(rng, k)
        enc = FecEncoder(ReliabilityConfig(fec_enabled=True,
                                           fec_group_delta=12))
        parity = enc.protect_frame(group)[-1]
        drop = rng.sample(range(k), rng.randint(2, k))
        present = {p.stream_seq: p for i, p in enumerate(group)
                   if i not in drop}
        assert repair_group(parity.fec_covered, present, parity) is None


def test_no_loss_returns_nothing():
    rng = random.Random(860)
    group = random_group(rng, 4)
    enc = FecEncoder(ReliabilityConfig(fec_enabled=True, fec_group_delta=4))
    parity = enc.protect_frame(group)[-1]
    present = {p.stream_seq: p for p in group}
    assert repair_group(parity.fec_covered, present, parity) is None


# --- Retransmission gates -----------------------------------------------

BIG_BWE = 100_000_000


def make_buffer(**kwargs):
    return RetransmissionBuffer(ReliabilityConfig(**kwargs))


def test_unknown_sequence_is_refused():
    buf = make_buffer()
    assert buf.handle_nack([5], now=0, rtt_estimate_us=100_000,
                           bwe_bps=BIG_BWE) == []
    assert buf.stats.not_in_buffer == 1
    assert buf.stats.requested == 1
    assert buf.stats.granted == 0


def test_repeat_within_rtt_is_refused():
    buf = make_buffer()
    buf.store(media_packet(0), ext_seq=0, now=0)
    assert len(buf.handle_nack([0], 0, 100_000, BIG_BWE)) == 1
    assert len(buf.handle_nack([0], 50_000, 100_000, BIG_BWE)) == 0
    assert buf.stats.within_rtt == 1
    # Exactly one RTT later the hold expires.
    assert len(buf.handle_nack([0], 100_000, 100_000, BIG_BWE)) == 1


def test_retransmission_count_is_capped():
    buf = make_buffer(rtx_max_count=2, rtx_age_ms=60_000)
    buf.store(media_packet(0), ext_seq=0, now=0)
    assert len(buf.handle_nack([0], 0, 1_000, BIG_BWE)) == 1
    assert len(buf.handle_nack([0], 10_000, 1_000, BIG_BWE)) == 1
    assert len(buf.handle_nack([0], 20_000, 1_000, BIG_BWE)) == 0
    assert buf.stats.count_exhausted == 1


def test_bandwidth_budget_is_enforced_and_decays():
    # 0.25 x 48 kbps / 8 = 1500 bytes/s; each packet is 1020 wire bytes.
    buf = make_buffer(rtx_age_ms=60_000)
    buf.store(media_packet(0), ext_seq=0, now=0)
    buf.store(media_packet(1), ext_seq=1, now=0)
    assert len(buf.handle_nack([0], 0, 1_000, bwe_bps=48_000)) == 1
    assert len(buf.handle_nack([1], 10_000, 1_000, bwe_bps=48_000)) == 0
    assert buf.stats.budget_exceeded == 1
    # The spent bytes fall out of the one-second accounting window.
    assert len(buf.handle_nack([1], 1_000_001, 1_000, bwe_bps=48_000)) == 1


def test_gates_apply_in_order():
    buf = make_buffer()
    # An unknown sequence under a hopeless budget counts only as unknown.
    buf.handle_nack([9], now=0, rtt_estimate_us=1_000, bwe_bps=8)
    assert buf.stats.not_in_buffer == 1
    assert buf.stats.budget_exceeded == 0


def test_grant_returns_a_fresh_copy():
    buf = make_buffer()
    original = media_packet(0)
    buf.store(original, ext_seq=0, now=0)
    rtx = buf.handle_nack([0], 0, 1_000, BIG_BWE)[0]
    assert rtx.is_retransmission
    assert rtx.transport_seq is None and rtx.send_time is None
    assert not original.is_retransmission
    again = buf.handle_nack([0], 10_000, 1_000, BIG_BWE)[0]
    assert again is not rtx


def test_eviction_by_sequence_window():
    buf = make_buffer(rtx_age_ms=60_000)
    buf.store(media_packet(0), ext_seq=0, now=0)
    buf.store(media_packet(1), ext_seq=10_001, now=0)
    assert len(buf) == 1
    buf.handle_nack([0], 0, 1_000, BIG_BWE)
    assert buf.stats.not_in_buffer == 1


def test_eviction_by_age():
    buf = make_buffer(rtx_age_ms=1_000)
    buf.store(media_packet(0), ext_seq=0, now=0)
    assert len(buf.handle_nack([0], 1_000_000, 1_000, BIG_BWE)) == 1
    assert len(buf.handle_nack([0], 2_000_001, 1_000, BIG_BWE)) == 0
    assert buf.stats.not_in_buffer == 1


def test_nack_sequence_unwraps_around_the_16_bit_space():
    buf = make_buffer()
    assert buf.unwrap_request(40) == 40
    buf.store(media_packet(0), ext_seq=65_530, now=0)
    assert buf.unwrap_request(3) == 65_539
    buf.store(media_packet(1), ext_seq=65_600, now=0)
    assert buf.unwrap_request(54) == 65_590


def test_config_validation():
    with pytest.raises(ConfigError):
        ReliabilityConfig(fec_group_delta=0).validate()
    with pytest.raises(ConfigError):
        ReliabilityConfig(rtx_age_ms=0).validate()
    with pytest.raises(ConfigError):
        ReliabilityConfig(rtx_bandwidth_fraction=0.0).validate()
    with pytest.raises(ConfigError):
        ReliabilityConfig(rtx_bandwidth_fraction=1.5).validate()
    with pytest.raises(ConfigError):
        ReliabilityConfig(rtx_max_count=0).validate()
