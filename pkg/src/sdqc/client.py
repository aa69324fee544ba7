"""Blocking TCP client for the QM server (one connection, one role)."""

from __future__ import annotations

import logging
import re
import socket
import time
from typing import List, Optional, Tuple

import numpy as np

from .protocol import (
    Banner,
    EncodeAck,
    EncodeReq,
    Error,
    ErrorCode,
    FrameDecoder,
    Hello,
    MeasReq,
    MeasResp,
    Message,
    Role,
    encode_frame,
)

log = logging.getLogger(__name__)


class TransportError(ConnectionError):
    """Connection could not be made or was lost."""


class ServerError(RuntimeError):
    def __init__(self, code: ErrorCode, message: str):
        super().__init__(f"{code.name}: {message}")
        self.code = code
        self.detail = message


class ClientSequenceError(ServerError):
    @property
    def expected_seq(self) -> Optional[int]:
        m = re.search(r"expected_seq=(\d+)", self.detail)
        return int(m.group(1)) if m else None


def _raise_for(err: Error):
    if err.code == ErrorCode.SEQUENCE_ERROR:
        raise ClientSequenceError(err.code, err.message)
    raise ServerError(err.code, err.message)


class QmClient:
    """Connects, performs the HELLO/BANNER handshake and issues requests.

    Connection attempts are retried ``retries`` times with doubling backoff.
    Encode requests are pipelined up to ``pipeline`` frames before acks are
    read; ordering is still checked ack by ack.
    """

    def __init__(
        self,
        host: str,
        port: int,
        role: Role,
        retries: int = 5,
        backoff: float = 0.1,
        timeout: Optional[float] = 30.0,
        pipeline: int = 256,
    ):
        self.host, self.port, self.role = host, port, Role(role)
        self.pipeline = pipeline
        self._sock = self._connect(retries, backoff, timeout)
        self._decoder = FrameDecoder()
        self._send(Hello(self.role))
        reply = self._recv()
        if isinstance(reply, Error):
            self.close()
            _raise_for(reply)
        if not isinstance(reply, Banner):
            raise ServerError(ErrorCode.PROTOCOL_ERROR, f"expected BANNER, got {type(reply).__name__}")
        self.banner = reply
        self.next_seq = reply.expected_seq

    def _connect(self, retries: int, backoff: float, timeout: Optional[float]) -> socket.socket:
        delay = backoff
        last: Optional[OSError] = None
        for attempt in range(1, retries + 1):
            try:
                sock = socket.create_connection((self.host, self.port), timeout=timeout)
                sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
                return sock
            except OSError as exc:
                last = exc
                log.info("connect attempt %d/%d to %s:%d failed: %s", attempt, retries, self.host, self.port, exc)
                if attempt < retries:
                    time.sleep(delay)
                    delay *= 2
        raise TransportError(f"cannot reach QM server at {self.host}:{self.port}: {last}")

    def close(self) -> None:
        try:
            self._sock.close()
        except OSError:
            pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _send(self, *msgs: Message) -> None:
        self._send_raw(b"".join(encode_frame(m) for m in msgs))

    def _send_raw(self, data: bytes) -> None:
        try:
            self._sock.sendall(data)
        except OSError as exc:
            raise TransportError(f"send failed: {exc}") from exc

    def _recv(self) -> Message:
        while True:
            msg = self._decoder.next_message()
            if msg is not None:
                return msg
            try:
                data = self._sock.recv(1 << 16)
            except OSError as exc:
                raise TransportError(f"receive failed: {exc}") from exc
            if not data:
                raise TransportError("server closed the connection")
            self._decoder.feed(data)

    # -- TX ----------------------------------------------------------------

    def encode(self, op_bits: int) -> int:
        return int(self.encode_many(np.array([op_bits], dtype=np.uint8))[0])

    def encode_many(self, codes) -> np.ndarray:
        """Send one ENCODE_REQ per code with consecutive seqs; returns qubit ids."""
        codes = [int(c) for c in np.asarray(codes).ravel()]
        ids = np.empty(len(codes), dtype=np.uint32)
        for start in range(0, len(codes), self.pipeline):
            batch = codes[start:start + self.pipeline]
            first = self.next_seq
            self._send(*(EncodeReq(first + i, c) for i, c in enumerate(batch)))
            for i in range(len(batch)):
                reply = self._recv()
                if isinstance(reply, Error):
                    _raise_for(reply)
                if not isinstance(reply, EncodeAck) or reply.seq != first + i:
                    raise ServerError(ErrorCode.PROTOCOL_ERROR, f"unexpected reply {reply!r} for seq {first + i}")
                ids[start + i] = reply.qubit_id
            self.next_seq = first + len(batch)
        return ids

    # -- RX ----------------------------------------------------------------

    def measure(self, max_count: int) -> MeasResp:
        self._send(MeasReq(max_count))
        reply = self._recv()
        if isinstance(reply, Error):
            _raise_for(reply)
        if not isinstance(reply, MeasResp):
            raise ServerError(ErrorCode.PROTOCOL_ERROR, f"expected MEAS_RESP, got {type(reply).__name__}")
        return reply

    def measure_arrays(self, max_count: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        resp = self.measure(max_count)
        ids = np.array([r.qubit_id for r in resp.results], dtype=np.uint32)
        events = [e for r in resp.results for e in r.events]
        if any(len(r.events) != 2 for r in resp.results):
            raise ServerError(ErrorCode.PROTOCOL_ERROR, "expected two detection events per qubit")
        ts = np.array([e.timestamp for e in events], dtype=np.uint64)
        ch = np.array([e.channel for e in events], dtype=np.uint8)
        return ids, ts, ch

    def send_raw(self, data: bytes) -> None:
        """Write bytes verbatim (diagnostics and fuzzing)."""
        self._send_raw(data)

    def receive(self) -> Message:
        return self._recv()


def connect_raw(host: str, port: int, timeout: float = 5.0) -> socket.socket:
    return socket.create_connection((host, port), timeout=timeout)


def read_messages(sock: socket.socket, count: int) -> List[Message]:
    """Read ``count`` frames from a raw socket."""
    dec = FrameDecoder()
    out: List[Message] = []
    while len(out) < count:
        msg = dec.next_message()
        if msg is not None:
            out.append(msg)
            continue
        data = sock.recv(1 << 16)
        if not data:
            break
        dec.feed(data)
    return out
