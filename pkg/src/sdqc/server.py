"""Qubit-management (QM) server: the emulated middleware between TX, RX and hardware.

:class:`QubitManager` holds the session state and is usable in-process (the
single-process simulation drives it directly). :class:`QmServer` exposes it
over TCP to one transmitter and one receiver connection at a time.
"""

from __future__ import annotations

import asyncio
import logging
import threading
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import kernels
from .detector import ClockModel, DetectionEvent, emit_outcome_codes
from .protocol import (
    DEFAULT_PORT,
    VERSION,
    Banner,
    EncodeAck,
    EncodeReq,
    Error,
    ErrorCode,
    FrameDecoder,
    Hello,
    MeasReq,
    MeasResp,
    MeasResult,
    ProtocolError,
    Role,
    encode_frame,
)
from .quantum import BellState, BitPair, ChannelPauli, MeasurementModel, check_probability
from .seeds import Stage, stage_rng

log = logging.getLogger(__name__)

MAX_QUBIT_ID = 0xFFFFFFFF
MAX_SEQ = 0xFFFFFFFF


class SequenceError(Exception):
    def __init__(self, got: int, expected: int):
        super().__init__(f"out-of-order seq {got}, expected {expected}")
        self.got = got
        self.expected = expected


class ExhaustedError(Exception):
    """The 32-bit qubit label or sequence space has run out."""


@dataclass(frozen=True)
class ServerConfig:
    p: float = 0.0
    model: MeasurementModel = MeasurementModel.COMPLETE
    seed: int = 0
    clock: ClockModel = field(default_factory=ClockModel)
    host: str = "127.0.0.1"
    port: int = DEFAULT_PORT

    def __post_init__(self):
        check_probability(self.p)
        object.__setattr__(self, "model", MeasurementModel(self.model))


@dataclass(frozen=True)
class QubitRecord:
    qubit_id: int
    seq: int
    encode_bits: BitPair
    post_channel_state: BellState
    applied_error: ChannelPauli
    events: Tuple[DetectionEvent, ...] = ()


class _Column:
    """Append-only numpy column with amortised growth."""

    def __init__(self, dtype, width: int = 1):
        self._data = np.empty(1024 * width, dtype=dtype)
        self._n = 0

    def extend(self, values) -> None:
        values = np.asarray(values, dtype=self._data.dtype).ravel()
        need = self._n + values.size
        if need > self._data.size:
            grown = np.empty(max(need, 2 * self._data.size), dtype=self._data.dtype)
            grown[: self._n] = self._data[: self._n]
            self._data = grown
        self._data[self._n:need] = values
        self._n = need

    def view(self) -> np.ndarray:
        return self._data[: self._n]

    def __len__(self) -> int:
        return self._n


class QubitManager:
    """Session state: qubit store, channel noise, measurement and event emission.

    Noise is applied when a qubit is created (one channel uniform per qubit);
    measurement happens in creation order and draws two jitter uniforms per
    qubit. Batch and single-request calls consume randomness identically, so a
    session's records depend only on (config, request trace).
    """

    def __init__(self, config: ServerConfig, first_qubit_id: int = 1, point: int = 0):
        self.config = config
        self._channel_rng = stage_rng(config.seed, Stage.CHANNEL, point)
        self._jitter_rng = stage_rng(config.seed, Stage.JITTER, point)
        self._first_id = first_qubit_id
        self._seq = _Column(np.uint32)
        self._bits = _Column(np.uint8)
        self._state = _Column(np.uint8)
        self._error = _Column(np.uint8)
        self._ts = _Column(np.uint64)
        self._ch = _Column(np.uint8)
        self.expected_seq = 0

    # -- bookkeeping -------------------------------------------------------

    @property
    def created(self) -> int:
        return len(self._bits)

    @property
    def measured(self) -> int:
        return len(self._ts) // 2

    @property
    def pending(self) -> int:
        return self.created - self.measured

    @property
    def next_qubit_id(self) -> int:
        return self._first_id + self.created

    def begin_tx(self) -> None:
        """A new transmitter connection restarts its packet counter at 0."""
        self.expected_seq = 0

    def error_histogram(self) -> Dict[ChannelPauli, int]:
        counts = np.bincount(self._error.view(), minlength=4)
        return {ChannelPauli(i): int(c) for i, c in enumerate(counts)}

    def record(self, qubit_id: int) -> QubitRecord:
        i = qubit_id - self._first_id
        if not 0 <= i < self.created:
            raise KeyError(qubit_id)
        events: Tuple[DetectionEvent, ...] = ()
        if i < self.measured:
            ts, ch = self._ts.view(), self._ch.view()
            events = tuple(DetectionEvent(int(ts[k]), int(ch[k])) for k in (2 * i, 2 * i + 1))
        return QubitRecord(
            qubit_id=qubit_id,
            seq=int(self._seq.view()[i]),
            encode_bits=BitPair.from_code(int(self._bits.view()[i])),
            post_channel_state=BellState(int(self._state.view()[i])),
            applied_error=ChannelPauli(int(self._error.view()[i])),
            events=events,
        )

    # -- requests ----------------------------------------------------------

    def handle_encode_request(self, seq: int, op_bits: BitPair | int) -> int:
        code = op_bits.code if isinstance(op_bits, BitPair) else int(op_bits)
        return int(self.encode_many(seq, np.array([code], dtype=np.uint8))[0])

    def encode_many(self, first_seq: int, codes: np.ndarray) -> np.ndarray:
        """Accept a run of consecutive requests starting at ``first_seq``."""
        codes = np.asarray(codes, dtype=np.uint8)
        n = codes.size
        if first_seq != self.expected_seq:
            raise SequenceError(first_seq, self.expected_seq)
        if first_seq + n - 1 > MAX_SEQ:
            raise ExhaustedError("sequence counter exhausted")
        first_id = self.next_qubit_id
        if first_id + n - 1 > MAX_QUBIT_ID:
            raise ExhaustedError("qubit label space exhausted")
        uniforms = self._channel_rng.random(n)
        states, errors = kernels.sdc_channel(codes, uniforms, self.config.p)
        self._seq.extend(np.arange(first_seq, first_seq + n, dtype=np.uint32))
        self._bits.extend(codes)
        self._state.extend(states)
        self._error.extend(errors)
        self.expected_seq = first_seq + n
        return np.arange(first_id, first_id + n, dtype=np.uint32)

    def measure_arrays(self, max_count: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Measure up to ``max_count`` oldest pending qubits.

        Returns (qubit ids, timestamps, channels) with two events per qubit.
        """
        if max_count <= 0:
            raise ValueError("max_count must be positive")
        start = self.measured
        k = min(max_count, self.pending)
        idx = slice(start, start + k)
        outcomes = kernels.bsm_measure(self._state.view()[idx], self.config.model)
        ids = np.arange(self._first_id + start, self._first_id + start + k, dtype=np.int64)
        # slot index on the detector clock is the qubit's creation index
        slots = ids - 1
        ts, ch = emit_outcome_codes(outcomes, slots, self.config.clock, self._jitter_rng)
        self._ts.extend(ts)
        self._ch.extend(ch)
        return ids.astype(np.uint32), ts, ch

    def handle_measure_request(self, max_count: int) -> List[MeasResult]:
        ids, ts, ch = self.measure_arrays(max_count)
        return results_from_arrays(ids, ts, ch)


def results_from_arrays(ids, ts, ch) -> List[MeasResult]:
    t, c = ts.tolist(), ch.tolist()
    return [
        MeasResult(qid, (DetectionEvent(t[2 * i], c[2 * i]), DetectionEvent(t[2 * i + 1], c[2 * i + 1])))
        for i, qid in enumerate(ids.tolist())
    ]


class _Connection:
    def __init__(self, reader, writer):
        self.reader = reader
        self.writer = writer
        self.role: Optional[Role] = None
        self.peer = writer.get_extra_info("peername")


class QmServer:
    """asyncio TCP front end for a :class:`QubitManager`.

    Requests are handled to completion on the event loop with no awaits in
    between, so every mutation of the store is atomic per request.
    """

    def __init__(self, config: ServerConfig, manager: Optional[QubitManager] = None):
        self.config = config
        self.manager = manager or QubitManager(config)
        self._roles: Dict[Role, _Connection] = {}
        self._server: Optional[asyncio.base_events.Server] = None
        self.port: Optional[int] = None

    async def start(self) -> None:
        self._server = await asyncio.start_server(self._handle, self.config.host, self.config.port)
        self.port = self._server.sockets[0].getsockname()[1]
        log.info(
            "QM server listening on %s:%d (p=%g, model=%s, seed=%d)",
            self.config.host, self.port, self.config.p, self.config.model.name, self.config.seed,
        )

    async def serve_forever(self) -> None:
        if self._server is None:
            await self.start()
        async with self._server:
            await self._server.serve_forever()

    async def close(self) -> None:
        if self._server is not None:
            self._server.close()
            await self._server.wait_closed()
        for conn in list(self._roles.values()):
            conn.writer.close()

    def _banner(self, role: Role) -> Banner:
        expected = self.manager.expected_seq if role == Role.TX else 0
        return Banner(VERSION, self.config.p, int(self.config.model), expected)

    def _dispatch(self, conn: _Connection, msg) -> Tuple[List[bytes], bool]:
        """Handle one request; returns (reply frames, close connection?)."""
        if isinstance(msg, Hello):
            if conn.role is not None:
                return [encode_frame(Error(ErrorCode.PROTOCOL_ERROR, "duplicate HELLO"))], False
            if msg.role in self._roles:
                return [encode_frame(Error(ErrorCode.ROLE_BUSY, f"{msg.role.name} role is taken"))], True
            conn.role = msg.role
            self._roles[msg.role] = conn
            if msg.role == Role.TX:
                self.manager.begin_tx()
            log.info("%s connected from %s", msg.role.name, conn.peer)
            return [encode_frame(self._banner(msg.role))], False
        if not isinstance(msg, (EncodeReq, MeasReq)):
            return [encode_frame(Error(ErrorCode.PROTOCOL_ERROR, f"unexpected {type(msg).__name__} from client"))], False
        if conn.role is None:
            return [encode_frame(Error(ErrorCode.PROTOCOL_ERROR, "HELLO required first"))], False
        if isinstance(msg, EncodeReq):
            if conn.role != Role.TX:
                return [encode_frame(Error(ErrorCode.VALIDATION_ERROR, "ENCODE_REQ requires TX role"))], False
            try:
                qid = self.manager.handle_encode_request(msg.seq, msg.op_bits)
            except SequenceError as exc:
                return [encode_frame(Error(ErrorCode.SEQUENCE_ERROR, f"expected_seq={exc.expected}"))], False
            except ExhaustedError as exc:
                return [encode_frame(Error(ErrorCode.VALIDATION_ERROR, str(exc)))], False
            return [encode_frame(EncodeAck(msg.seq, qid))], False
        if conn.role != Role.RX:
            return [encode_frame(Error(ErrorCode.VALIDATION_ERROR, "MEAS_REQ requires RX role"))], False
        if msg.max_count == 0:
            return [encode_frame(Error(ErrorCode.VALIDATION_ERROR, "max_count must be positive"))], False
        results = self.manager.handle_measure_request(msg.max_count)
        return [encode_frame(MeasResp(tuple(results)))], False

    async def _handle(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        conn = _Connection(reader, writer)
        decoder = FrameDecoder()
        closing = False
        try:
            while not closing:
                data = await reader.read(1 << 16)
                if not data:
                    break
                decoder.feed(data)
                out: List[bytes] = []
                while True:
                    try:
                        msg = decoder.next_message()
                    except ProtocolError as exc:
                        log.warning("protocol error from %s: %s", conn.peer, exc)
                        out.append(encode_frame(Error(ErrorCode.PROTOCOL_ERROR, str(exc))))
                        if not exc.recoverable:
                            closing = True
                            break
                        continue
                    if msg is None:
                        break
                    frames, closing = self._dispatch(conn, msg)
                    out.extend(frames)
                    if closing:
                        break
                if out:
                    writer.write(b"".join(out))
                    await writer.drain()
        except (ConnectionError, asyncio.IncompleteReadError) as exc:
            log.info("connection %s dropped: %s", conn.peer, exc)
        finally:
            if conn.role is not None and self._roles.get(conn.role) is conn:
                del self._roles[conn.role]
                log.info("%s disconnected", conn.role.name)
            writer.close()
            try:
                await writer.wait_closed()
            except (ConnectionError, OSError):
                pass


class ServerThread:
    """Run a :class:`QmServer` on a private event loop in a daemon thread.

    Intended for tests and embedding; the CLI runs the server in the foreground.
    """

    def __init__(self, config: ServerConfig):
        self.server = QmServer(config)
        self._loop = asyncio.new_event_loop()
        self._thread = threading.Thread(target=self._loop.run_forever, name="qm-server", daemon=True)

    @property
    def manager(self) -> QubitManager:
        return self.server.manager

    @property
    def port(self) -> int:
        return self.server.port

    def start(self) -> "ServerThread":
        self._thread.start()
        asyncio.run_coroutine_threadsafe(self.server.start(), self._loop).result(5)
        return self

    def call(self, fn, *args):
        """Run ``fn`` on the server loop, serialised with request handling."""
        async def _run():
            return fn(*args)
        return asyncio.run_coroutine_threadsafe(_run(), self._loop).result(5)

    def stop(self) -> None:
        asyncio.run_coroutine_threadsafe(self.server.close(), self._loop).result(5)
        self._loop.call_soon_threadsafe(self._loop.stop)
        self._thread.join(5)

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()
