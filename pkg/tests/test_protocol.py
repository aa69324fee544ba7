import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fuzzing import mutated_frames, random_message
from sdqc.detector import DetectionEvent
from sdqc.protocol import (
    Banner,
    EncodeAck,
    EncodeReq,
    Error,
    ErrorCode,
    FrameDecoder,
    Hello,
    IncompleteFrame,
    MeasReq,
    MeasResp,
    MeasResult,
    ProtocolError,
    Role,
    decode_frame,
    decode_stream,
    encode_frame,
)

u32 = st.integers(0, 2**32 - 1)
events = st.builds(DetectionEvent, st.integers(0, 2**64 - 1), st.integers(0, 3))
messages = st.one_of(
    st.builds(EncodeReq, u32, st.integers(0, 3)),
    st.builds(EncodeAck, u32, u32),
    st.builds(MeasReq, st.integers(0, 2**16 - 1)),
    st.builds(MeasResp, st.lists(st.builds(MeasResult, u32, st.lists(events, max_size=3).map(tuple)),
                                 max_size=6).map(tuple)),
    st.builds(Hello, st.sampled_from(list(Role))),
    st.builds(Banner, st.integers(0, 255), st.floats(0, 1), st.integers(0, 1), u32),
    st.builds(Error, st.sampled_from(list(ErrorCode)), st.text(max_size=30)),
)


class TestLayout:
    def test_encode_req_bytes(self):
        assert encode_frame(EncodeReq(0, 0b01)).hex(" ") == "51 4d 01 01 00 00 00 05 00 00 00 00 01"

    def test_meas_resp_bytes(self):
        frame = encode_frame(MeasResp((MeasResult(7, (DetectionEvent(2000, 0), DetectionEvent(2001, 2))),)))
        assert frame == bytes.fromhex(
            "514d0104 00000019"
            "0001" "00000007" "02" "00000000000007d0" "00" "00000000000007d1" "02"
        )

    def test_banner_bytes(self):
        frame = encode_frame(Banner(1, 0.5, 1, 9))
        assert frame == bytes.fromhex("514d0106 0000000e 01 3fe0000000000000 01 00000009")

    def test_error_bytes(self):
        assert encode_frame(Error(ErrorCode.SEQUENCE_ERROR, "x")) == bytes.fromhex("514d017f 00000002 02 78")

    def test_encoder_range_checks(self):
        with pytest.raises(ValueError):
            encode_frame(EncodeReq(2**32, 0))
        with pytest.raises(ValueError):
            encode_frame(EncodeReq(0, 4))
        with pytest.raises(TypeError):
            encode_frame("hello")


@settings(max_examples=300, deadline=None)
@given(messages)
def test_round_trip(msg):
    assert decode_frame(encode_frame(msg)) == msg


def test_round_trip_random_stream():
    rng = np.random.default_rng(4)
    msgs = [random_message(rng) for _ in range(500)]
    blob = b"".join(encode_frame(m) for m in msgs)
    dec = FrameDecoder()
    got = []
    # feed in irregular pieces to exercise buffering
    pos = 0
    while pos < len(blob):
        step = int(rng.integers(1, 40))
        dec.feed(blob[pos:pos + step])
        pos += step
        got.extend(dec)
    assert got == msgs
    assert dec.buffered == 0


def test_partial_frame_waits():
    frame = encode_frame(EncodeAck(3, 4))
    dec = FrameDecoder()
    dec.feed(frame[:5])
    assert dec.next_message() is None
    dec.feed(frame[5:11])
    assert dec.next_message() is None
    dec.feed(frame[11:])
    assert dec.next_message() == EncodeAck(3, 4)
    with pytest.raises(IncompleteFrame):
        decode_frame(frame[:-1])


def test_bad_magic():
    with pytest.raises(ProtocolError) as exc:
        decode_frame(b"\x00\x00" + encode_frame(MeasReq(1))[2:])
    assert not exc.value.recoverable


def test_broken_stream_stays_broken():
    dec = FrameDecoder()
    dec.feed(b"XX")
    with pytest.raises(ProtocolError):
        dec.next_message()
    dec.feed(encode_frame(MeasReq(1)))
    with pytest.raises(ProtocolError):
        dec.next_message()


def test_unknown_type_is_skipped():
    bad = bytes.fromhex("514d0155 00000003 aabbcc")
    dec = FrameDecoder()
    dec.feed(bad + encode_frame(MeasReq(5)))
    with pytest.raises(ProtocolError) as exc:
        dec.next_message()
    assert exc.value.recoverable
    assert dec.next_message() == MeasReq(5)


def test_bad_version_is_skipped():
    frame = bytearray(encode_frame(MeasReq(5)))
    frame[2] = 2
    dec = FrameDecoder()
    dec.feed(bytes(frame) + encode_frame(MeasReq(6)))
    with pytest.raises(ProtocolError):
        dec.next_message()
    assert dec.next_message() == MeasReq(6)


def test_trailing_bytes_rejected():
    with pytest.raises(ProtocolError):
        decode_frame(encode_frame(MeasReq(1)) + b"\x00")


def test_decode_stream():
    msgs = [Hello(Role.TX), EncodeReq(0, 3)]
    assert decode_stream(b"".join(map(encode_frame, msgs))) == msgs


def test_mutations_all_rejected():
    for frame in mutated_frames(1000, seed=8):
        with pytest.raises(ProtocolError) as exc:
            decode_frame(frame)
        assert not isinstance(exc.value, IncompleteFrame)
