"""Random protocol messages and structurally broken frames for fuzz tests."""

import struct

import numpy as np

from sdqc.detector import DetectionEvent
from sdqc.protocol import (
    HEADER,
    MAX_PAYLOAD,
    Banner,
    EncodeAck,
    EncodeReq,
    Error,
    ErrorCode,
    FrameType,
    Hello,
    MeasReq,
    MeasResp,
    MeasResult,
    Role,
    encode_frame,
)

KNOWN_TYPES = {int(t) for t in FrameType}
FIXED = {FrameType.ENCODE_REQ: 5, FrameType.ENCODE_ACK: 8, FrameType.MEAS_REQ: 2,
         FrameType.HELLO: 1, FrameType.BANNER: 14}


def random_message(rng: np.random.Generator):
    kind = int(rng.integers(0, 7))
    u32 = lambda: int(rng.integers(0, 2**32))
    if kind == 0:
        return EncodeReq(u32(), int(rng.integers(0, 4)))
    if kind == 1:
        return EncodeAck(u32(), u32())
    if kind == 2:
        return MeasReq(int(rng.integers(0, 2**16)))
    if kind == 3:
        results = []
        for _ in range(int(rng.integers(0, 6))):
            events = tuple(
                DetectionEvent(int(rng.integers(0, 2**63)) * 2 + int(rng.integers(0, 2)), int(rng.integers(0, 4)))
                for _ in range(int(rng.integers(0, 3)))
            )
            results.append(MeasResult(u32(), events))
        return MeasResp(tuple(results))
    if kind == 4:
        return Hello(Role(int(rng.integers(1, 3))))
    if kind == 5:
        return Banner(int(rng.integers(0, 256)), float(rng.random()), int(rng.integers(0, 2)), u32())
    text = "".join(chr(int(c)) for c in rng.integers(32, 0x3000, int(rng.integers(0, 20))))
    return Error(ErrorCode(int(rng.integers(1, 5))), text)


def _with_header(frame: bytes, *, magic=None, version=None, ftype=None, length=None) -> bytes:
    m, v, t, n = HEADER.unpack_from(frame)
    return HEADER.pack(magic or m, v if version is None else version, t if ftype is None else ftype,
                       n if length is None else length) + frame[HEADER.size:]


def _replace_payload(frame: bytes, payload: bytes) -> bytes:
    return _with_header(frame, length=len(payload))[: HEADER.size] + payload


def mutate(frame: bytes, rng: np.random.Generator) -> bytes:
    """Break a valid frame so that decoding must fail (never merely 'wait for more')."""
    _, _, ftype, length = HEADER.unpack_from(frame)
    payload = frame[HEADER.size:]
    ftype = FrameType(ftype)
    options = ["magic", "version", "type", "oversize"]
    if ftype in FIXED:
        options.append("fixed_length")
    if ftype == FrameType.ENCODE_REQ:
        options.append("op_bits")
    if ftype == FrameType.HELLO:
        options.append("role")
    if ftype == FrameType.BANNER:
        options.append("banner")
    if ftype == FrameType.ERROR:
        options.append("error_code")
    if ftype == FrameType.MEAS_RESP:
        options += ["resp_trailing", "resp_count"]
    choice = options[int(rng.integers(0, len(options)))]

    if choice == "magic":
        i = int(rng.integers(0, 2))
        b = bytearray(frame)
        b[i] = (b[i] + int(rng.integers(1, 256))) % 256
        return bytes(b)
    if choice == "version":
        return _with_header(frame, version=int(rng.choice([v for v in range(256) if v != 1])))
    if choice == "type":
        return _with_header(frame, ftype=int(rng.choice([t for t in range(256) if t not in KNOWN_TYPES])))
    if choice == "oversize":
        return _with_header(frame, length=int(rng.integers(MAX_PAYLOAD + 1, 2**32)))
    if choice == "fixed_length":
        wrong = int(rng.integers(0, 64))
        if wrong == FIXED[ftype]:
            wrong += 1
        return _with_header(frame, length=wrong)
    if choice == "op_bits":
        return frame[:-1] + bytes([int(rng.integers(4, 256))])
    if choice == "role":
        return frame[:-1] + bytes([int(rng.choice([r for r in range(256) if r not in (1, 2)]))])
    if choice == "banner":
        if rng.random() < 0.5:
            return _replace_payload(frame, payload[:9] + bytes([int(rng.integers(2, 256))]) + payload[10:])
        bad = float(rng.choice([float("nan"), -0.5, 1.5, float("inf")]))
        return _replace_payload(frame, payload[:1] + struct.pack(">d", bad) + payload[9:])
    if choice == "error_code":
        code = int(rng.choice([c for c in range(256) if c not in (1, 2, 3, 4)]))
        return _replace_payload(frame, bytes([code]) + payload[1:])
    if choice == "resp_trailing":
        return _replace_payload(frame, payload + bytes(int(rng.integers(1, 8))))
    # resp_count: claim more results than present
    (count,) = struct.unpack_from(">H", payload)
    return _replace_payload(frame, struct.pack(">H", count + int(rng.integers(1, 5))) + payload[2:])


def mutated_frames(n: int, seed: int):
    rng = np.random.default_rng(seed)
    return [mutate(encode_frame(random_message(rng)), rng) for _ in range(n)]
