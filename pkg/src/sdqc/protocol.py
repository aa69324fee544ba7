"""Binary framing for the qubit-management service.

Every frame is ``'QM' | version u8 | type u8 | length u32 | payload``, all
integers big-endian. :class:`FrameDecoder` handles a TCP byte stream,
buffering partial frames.
"""

from __future__ import annotations

import enum
import math
import struct
from dataclasses import dataclass
from typing import Iterator, List, Optional, Tuple, Union

from .detector import DetectionEvent, N_CHANNELS

MAGIC = b"QM"
VERSION = 1
HEADER = struct.Struct(">2sBBI")
MAX_PAYLOAD = 16 * 1024 * 1024
DEFAULT_PORT = 40411


class FrameType(enum.IntEnum):
    ENCODE_REQ = 0x01
    ENCODE_ACK = 0x02
    MEAS_REQ = 0x03
    MEAS_RESP = 0x04
    HELLO = 0x05
    BANNER = 0x06
    ERROR = 0x7F


class ErrorCode(enum.IntEnum):
    PROTOCOL_ERROR = 1
    SEQUENCE_ERROR = 2
    ROLE_BUSY = 3
    VALIDATION_ERROR = 4


class Role(enum.IntEnum):
    TX = 1
    RX = 2


class ProtocolError(ValueError):
    """Malformed frame.

    ``recoverable`` is true when the bad frame's extent was known and it has
    been skipped, so the stream can continue with the next frame.
    """

    def __init__(self, message: str, recoverable: bool = False):
        super().__init__(message)
        self.recoverable = recoverable


class IncompleteFrame(ProtocolError):
    pass


@dataclass(frozen=True)
class EncodeReq:
    seq: int
    op_bits: int


@dataclass(frozen=True)
class EncodeAck:
    seq: int
    qubit_id: int


@dataclass(frozen=True)
class MeasReq:
    max_count: int


@dataclass(frozen=True)
class MeasResult:
    qubit_id: int
    events: Tuple[DetectionEvent, ...]


@dataclass(frozen=True)
class MeasResp:
    results: Tuple[MeasResult, ...]


@dataclass(frozen=True)
class Hello:
    role: Role


@dataclass(frozen=True)
class Banner:
    version: int
    p: float
    model: int
    expected_seq: int


@dataclass(frozen=True)
class Error:
    code: ErrorCode
    message: str = ""


Message = Union[EncodeReq, EncodeAck, MeasReq, MeasResp, Hello, Banner, Error]

_FIXED_LENGTH = {
    FrameType.ENCODE_REQ: 5,
    FrameType.ENCODE_ACK: 8,
    FrameType.MEAS_REQ: 2,
    FrameType.HELLO: 1,
    FrameType.BANNER: 14,
}
_U32 = 0xFFFFFFFF


def _check_range(name: str, value: int, hi: int) -> None:
    if not 0 <= value <= hi:
        raise ValueError(f"{name} out of range: {value}")


def _encode_payload(msg: Message) -> Tuple[FrameType, bytes]:
    if isinstance(msg, EncodeReq):
        _check_range("seq", msg.seq, _U32)
        _check_range("op_bits", msg.op_bits, 3)
        return FrameType.ENCODE_REQ, struct.pack(">IB", msg.seq, msg.op_bits)
    if isinstance(msg, EncodeAck):
        _check_range("seq", msg.seq, _U32)
        _check_range("qubit_id", msg.qubit_id, _U32)
        return FrameType.ENCODE_ACK, struct.pack(">II", msg.seq, msg.qubit_id)
    if isinstance(msg, MeasReq):
        _check_range("max_count", msg.max_count, 0xFFFF)
        return FrameType.MEAS_REQ, struct.pack(">H", msg.max_count)
    if isinstance(msg, MeasResp):
        _check_range("count", len(msg.results), 0xFFFF)
        parts = [struct.pack(">H", len(msg.results))]
        for r in msg.results:
            _check_range("qubit_id", r.qubit_id, _U32)
            _check_range("n_events", len(r.events), 0xFF)
            parts.append(struct.pack(">IB", r.qubit_id, len(r.events)))
            parts.extend(struct.pack(">QB", e.timestamp, e.channel) for e in r.events)
        return FrameType.MEAS_RESP, b"".join(parts)
    if isinstance(msg, Hello):
        return FrameType.HELLO, struct.pack(">B", Role(msg.role))
    if isinstance(msg, Banner):
        _check_range("expected_seq", msg.expected_seq, _U32)
        return FrameType.BANNER, struct.pack(">BdBI", msg.version, msg.p, msg.model, msg.expected_seq)
    if isinstance(msg, Error):
        return FrameType.ERROR, struct.pack(">B", ErrorCode(msg.code)) + msg.message.encode("utf-8")
    raise TypeError(f"not a protocol message: {msg!r}")


def encode_frame(msg: Message) -> bytes:
    ftype, payload = _encode_payload(msg)
    return HEADER.pack(MAGIC, VERSION, ftype, len(payload)) + payload


def _decode_payload(ftype: FrameType, payload: bytes) -> Message:
    if ftype == FrameType.ENCODE_REQ:
        seq, bits = struct.unpack(">IB", payload)
        if bits > 3:
            raise ProtocolError(f"op_bits has reserved bits set: {bits:#04x}", True)
        return EncodeReq(seq, bits)
    if ftype == FrameType.ENCODE_ACK:
        return EncodeAck(*struct.unpack(">II", payload))
    if ftype == FrameType.MEAS_REQ:
        return MeasReq(*struct.unpack(">H", payload))
    if ftype == FrameType.HELLO:
        (role,) = struct.unpack(">B", payload)
        if role not in (Role.TX, Role.RX):
            raise ProtocolError(f"unknown role {role}", True)
        return Hello(Role(role))
    if ftype == FrameType.BANNER:
        version, p, model, expected = struct.unpack(">BdBI", payload)
        if not (0.0 <= p <= 1.0) or math.isnan(p):
            raise ProtocolError(f"banner noise parameter out of range: {p}", True)
        if model not in (0, 1):
            raise ProtocolError(f"unknown measurement model {model}", True)
        return Banner(version, p, model, expected)
    if ftype == FrameType.ERROR:
        if not payload:
            raise ProtocolError("empty ERROR payload", True)
        if payload[0] not in ErrorCode._value2member_map_:
            raise ProtocolError(f"unknown error code {payload[0]}", True)
        try:
            text = payload[1:].decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ProtocolError(f"ERROR message is not utf-8: {exc}", True) from None
        return Error(ErrorCode(payload[0]), text)
    # MEAS_RESP
    if len(payload) < 2:
        raise ProtocolError("MEAS_RESP shorter than its count field", True)
    (count,) = struct.unpack_from(">H", payload)
    pos = 2
    results = []
    for _ in range(count):
        if pos + 5 > len(payload):
            raise ProtocolError("MEAS_RESP truncated inside a result header", True)
        qid, n = struct.unpack_from(">IB", payload, pos)
        pos += 5
        if pos + 9 * n > len(payload):
            raise ProtocolError("MEAS_RESP truncated inside an event list", True)
        events = []
        for _ in range(n):
            ts, ch = struct.unpack_from(">QB", payload, pos)
            pos += 9
            if ch >= N_CHANNELS:
                raise ProtocolError(f"detector channel {ch} out of range", True)
            events.append(DetectionEvent(ts, ch))
        results.append(MeasResult(qid, tuple(events)))
    if pos != len(payload):
        raise ProtocolError(f"MEAS_RESP has {len(payload) - pos} trailing bytes", True)
    return MeasResp(tuple(results))


def _parse_header(buf: bytes) -> Optional[Tuple[int, int, int]]:
    """Validate as much header as is buffered; None if incomplete."""
    if len(buf) >= 1 and buf[0] != MAGIC[0] or len(buf) >= 2 and buf[1] != MAGIC[1]:
        raise ProtocolError(f"bad magic {bytes(buf[:2]).hex()}")
    if len(buf) < HEADER.size:
        return None
    _, version, ftype, length = HEADER.unpack_from(buf)
    if length > MAX_PAYLOAD:
        raise ProtocolError(f"declared length {length} exceeds limit {MAX_PAYLOAD}")
    if ftype in _FIXED_LENGTH and version == VERSION and length != _FIXED_LENGTH[FrameType(ftype)]:
        raise ProtocolError(
            f"{FrameType(ftype).name} payload must be {_FIXED_LENGTH[FrameType(ftype)]} bytes, got {length}"
        )
    return version, ftype, length


class FrameDecoder:
    """Incremental decoder for a byte stream.

    After an unrecoverable error (bad magic, oversized or inconsistent length)
    the stream position is lost and every later call raises again.
    """

    def __init__(self):
        self._buf = bytearray()
        self._broken: Optional[ProtocolError] = None

    def feed(self, data: bytes) -> None:
        self._buf.extend(data)

    @property
    def buffered(self) -> int:
        return len(self._buf)

    def next_message(self) -> Optional[Message]:
        if self._broken is not None:
            raise ProtocolError(f"stream unusable after earlier error: {self._broken}")
        try:
            header = _parse_header(self._buf)
        except ProtocolError as exc:
            self._broken = exc
            raise
        if header is None:
            return None
        version, ftype, length = header
        end = HEADER.size + length
        if len(self._buf) < end:
            return None
        payload = bytes(self._buf[HEADER.size:end])
        del self._buf[:end]
        if version != VERSION:
            raise ProtocolError(f"unsupported version {version}", True)
        if ftype not in FrameType._value2member_map_:
            raise ProtocolError(f"unknown frame type {ftype:#04x}", True)
        return _decode_payload(FrameType(ftype), payload)

    def __iter__(self) -> Iterator[Message]:
        while True:
            msg = self.next_message()
            if msg is None:
                return
            yield msg


def decode_frame(data: bytes) -> Message:
    """Decode exactly one complete frame."""
    dec = FrameDecoder()
    dec.feed(data)
    msg = dec.next_message()
    if msg is None:
        raise IncompleteFrame(f"need more bytes (have {len(data)})", True)
    if dec.buffered:
        raise ProtocolError(f"{dec.buffered} bytes after the frame", True)
    return msg


def decode_stream(data: bytes) -> List[Message]:
    dec = FrameDecoder()
    dec.feed(data)
    msgs = list(dec)
    if dec.buffered:
        raise IncompleteFrame(f"{dec.buffered} bytes of an incomplete frame", True)
    return msgs
