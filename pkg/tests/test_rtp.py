"""Packetization and pacing."""

import pytest
from hypothesis import given, strategies as st

from rtcnetlab.engine import ConfigError, Engine
from rtcnetlab.media import MediaFrame
from rtcnetlab.rtp import (RTP_HEADER_BYTES, RtpConfig, Packetizer, Pacer,
                           SEQ_SPACE)


def frame(frame_id=0, size=5_000, capture_time=0, is_keyframe=False):
    return MediaFrame(frame_id=frame_id, capture_time=capture_time,
                      encode_done_time=capture_time + 1_000, size=size,
                      is_keyframe=is_keyframe)


def make_packetizer(mtu=1_250, seed=1):
    return Packetizer(RtpConfig(mtu=mtu), Engine(seed).stream("rtp.offset"))


def test_split_covers_frame_exactly():
    packets = make_packetizer().packetize(frame(size=5_000))
    assert sum(p.payload_size for p in packets) == 5_000
    # The MTU bounds the wire size, so each payload fits in mtu - header.
    assert all(p.payload_size <= 1_250 - RTP_HEADER_BYTES for p in packets)
    assert all(p.wire_size <= 1_250 for p in packets)
    assert len(packets) == 5


def test_mtu_boundary_sizes():
    pktz = make_packetizer()
    chunk = 1_250 - RTP_HEADER_BYTES
    assert len(pktz.packetize(frame(frame_id=0, size=chunk))) == 1
    assert len(pktz.packetize(frame(frame_id=1, size=chunk + 1))) == 2
    assert len(pktz.packetize(frame(frame_id=2, size=1))) == 1


def test_marker_only_on_last_packet():
    packets = make_packetizer().packetize(frame(size=4_000))
    assert [p.marker for p in packets] == [False, False, False, True]


def test_indices_and_count():
    packets = make_packetizer().packetize(frame(size=4_000))
    for i, p in enumerate(packets):
        assert p.frame_packet_index == i
        assert p.frame_packet_count == len(packets)


def test_sequence_numbers_are_contiguous_across_frames():
    pktz = make_packetizer()
    seqs = []
    for fid in range(6):
        for p in pktz.packetize(frame(frame_id=fid, size=3_000)):
            seqs.append(p.stream_seq)
    base = seqs[0]
    assert seqs == [(base + i) % SEQ_SPACE for i in range(len(seqs))]


def test_timestamp_uses_media_clock():
    pktz = make_packetizer()
    first = pktz.packetize(frame(frame_id=0, capture_time=0))
    second = pktz.packetize(frame(frame_id=1, capture_time=50_000))
    delta = (second[0].rtp_timestamp - first[0].rtp_timestamp) % (1 << 32)
    assert delta == 90_000 * 50_000 // 1_000_000
    assert all(p.rtp_timestamp == first[0].rtp_timestamp for p in first)


def test_timestamp_offset_is_seeded_random():
    a = make_packetizer(seed=5).packetize(frame())[0].rtp_timestamp
    b = make_packetizer(seed=5).packetize(frame())[0].rtp_timestamp
    c = make_packetizer(seed=6).packetize(frame())[0].rtp_timestamp
    assert a == b
    assert a != c


def test_wire_size_includes_header():
    packet = make_packetizer().packetize(frame(size=100))[0]
    assert packet.wire_size == 100 + RTP_HEADER_BYTES


def test_keyframe_flag_propagates():
    packets = make_packetizer().packetize(frame(is_keyframe=True))
    assert all(p.is_keyframe for p in packets)


@given(st.integers(min_value=1, max_value=100_000),
       st.integers(min_value=120, max_value=1_500))
def test_any_size_packetizes_consistently(size, mtu):
    pktz = Packetizer(RtpConfig(mtu=mtu), Engine(1).stream("rtp.offset"))
    packets = pktz.packetize(frame(size=size))
    chunk = mtu - RTP_HEADER_BYTES
    assert sum(p.payload_size for p in packets) == size
    assert all(0 < p.payload_size <= chunk for p in packets)
    assert all(p.wire_size <= mtu for p in packets)
    assert packets[-1].marker
    assert len(packets) == -(-size // chunk)


def test_pacer_spaces_packets_at_the_configured_rate():
    engine = Engine(1)
    sent = []
    pacer = Pacer(engine, 1_000_000, lambda p: sent.append(
        (engine.clock, p)))
    packets = make_packetizer().packetize(frame(size=3_690))
    for p in packets:
        pacer.enqueue(p)
    engine.run_until(100_000)
    assert len(sent) == 3
    # Each packet is (1230 payload + 20 header) * 8 = 10000 bits, which is
    # 10000 us of wire time at 1 Mbps. The first leaves immediately.
    assert [t for t, _ in sent] == [0, 10_000, 20_000]


def test_pacer_front_enqueue_jumps_the_queue():
    engine = Engine(1)
    sent = []
    pacer = Pacer(engine, 8_000_000, lambda p: sent.append(p.frame_id))
    a, b = make_packetizer().packetize(frame(frame_id=1, size=2_400))
    urgent = make_packetizer().packetize(frame(frame_id=9, size=100))[0]
    pacer.enqueue(a)
    pacer.enqueue(b)
    pacer.enqueue(urgent, front=True)
    engine.run_until(50_000)
    assert sent[0] == 9 or sent[1] == 9
    assert sent.count(1) == 2


def test_pacer_rate_change_applies_to_later_releases():
    engine = Engine(1)
    sent = []
    pacer = Pacer(engine, 1_000_000, lambda p: sent.append(engine.clock))
    for p in make_packetizer().packetize(frame(size=3_690)):
        pacer.enqueue(p)
    engine.run_until(0)
    # The second release was already scheduled under the old rate; only
    # the third one is spaced at the new rate (10000 bits / 10 Mbps).
    pacer.set_rate(10_000_000)
    engine.run_until(100_000)
    assert sent == [0, 10_000, 11_000]


def test_pacer_rejects_bad_rate():
    with pytest.raises(ConfigError):
        Pacer(Engine(1), 0, lambda p: None)
    pacer = Pacer(Engine(1), 1_000_000, lambda p: None)
    with pytest.raises(ConfigError):
        pacer.set_rate(-5)


def test_pacer_backlog_drains():
    engine = Engine(1)
    pacer = Pacer(engine, 1_000_000, lambda p: None)
    for p in make_packetizer().packetize(frame(size=12_000)):
        pacer.enqueue(p)
    assert pacer.backlog > 0
    engine.run_until(1_000_000)
    assert pacer.backlog == 0
