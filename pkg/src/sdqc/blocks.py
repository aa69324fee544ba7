"""Super-dense coding processing blocks and their plain-function counterparts.

Stream item types (all numpy arrays):

``bitpair``
    uint8 message codes ``b1 << 1 | b2``.
``encode_op``
    uint8 :class:`~sdqc.quantum.EncodeOp` codes.
``qubit_events``
    records of :data:`QUBIT_EVENTS_DTYPE`, one measured qubit with its two clicks.
``bsm_outcome``
    uint8 outcome codes: 0-3 identified Bell state, 4 ambiguous Phi,
    5-7 correlator failures.
``decoded``
    uint8 bit-pair codes, or :data:`ERASURE_CODE` where nothing could be decoded.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Union

import numpy as np

from .detector import ClockModel, correlate_codes
from .flowgraph import Block
from .quantum import (
    AMBIGUOUS_CODE,
    BellState,
    BitPair,
    BsmOutcome,
    EncodeOp,
    MeasurementModel,
    bits_for_bell_state,
    bits_for_encode_op,
    encode_op_for_bits,
)

log = logging.getLogger(__name__)

BITPAIR = "bitpair"
ENCODE_OP = "encode_op"
QUBIT_EVENTS = "qubit_events"
BSM_OUTCOME = "bsm_outcome"
DECODED = "decoded"

QUBIT_EVENTS_DTYPE = np.dtype([("qubit_id", "<u4"), ("ts", "<u8", (2,)), ("ch", "u1", (2,))])
ERASURE_CODE = 255
INVALID_CODE = 7


class _Erasure:
    def __repr__(self):
        return "ERASURE"


ERASURE = _Erasure()

_OP_FOR_BITS = np.array([encode_op_for_bits(BitPair.from_code(c)) for c in range(4)], dtype=np.uint8)
_BITS_FOR_OP = np.array([bits_for_encode_op(EncodeOp(c)).code for c in range(4)], dtype=np.uint8)
# outcome code -> decoded code; everything but an identified state is an erasure
_DECODE = np.full(256, ERASURE_CODE, dtype=np.uint8)
for _s in BellState:
    _DECODE[_s] = bits_for_bell_state(_s).code


# --- packing -------------------------------------------------------------

def pack_payload(payload: bytes) -> np.ndarray:
    """Bytes -> bit-pair codes, four per byte, most significant pair first."""
    raw = np.frombuffer(bytes(payload), dtype=np.uint8)
    pairs = np.stack([raw >> 6, (raw >> 4) & 3, (raw >> 2) & 3, raw & 3], axis=1)
    return pairs.ravel().astype(np.uint8)


@dataclass
class SinkReport:
    payload: bytes
    pairs: int
    partial_trailing_bits: int = 0
    erased_bytes: List[int] = field(default_factory=list)
    erasures: int = 0

    @property
    def notes(self) -> List[str]:
        out = []
        if self.partial_trailing_bits:
            out.append(f"partial trailing byte ({self.partial_trailing_bits} bits)")
        if self.erased_bytes:
            out.append(f"{self.erasures} erased bit pairs in {len(self.erased_bytes)} bytes")
        return out


def unpack_codes(codes: np.ndarray) -> SinkReport:
    """Reassemble bytes from decoded codes; erased pairs read as 00 and are flagged."""
    codes = np.asarray(codes, dtype=np.uint8)
    n_full = len(codes) // 4
    erased = codes == ERASURE_CODE
    clean = np.where(erased, 0, codes)[: 4 * n_full].reshape(n_full, 4).astype(np.uint8)
    data = (clean[:, 0] << 6) | (clean[:, 1] << 4) | (clean[:, 2] << 2) | clean[:, 3]
    return SinkReport(
        payload=data.astype(np.uint8).tobytes(),
        pairs=len(codes),
        partial_trailing_bits=2 * (len(codes) % 4),
        erased_bytes=sorted(set((np.flatnonzero(erased) // 4).tolist())),
        erasures=int(erased.sum()),
    )


# --- bit error accounting ------------------------------------------------

class StreamMismatchError(ValueError):
    def __init__(self, missing_side: str, first: int, last: int):
        super().__init__(f"{missing_side} stream is missing sequence numbers {first}..{last}")
        self.missing_side = missing_side
        self.missing = range(first, last + 1)


@dataclass
class BerStats:
    window_size: int = 200
    pairs: int = 0
    erasures: int = 0
    bits_compared: int = 0
    bit_errors: int = 0
    window_errors: List[int] = field(default_factory=list)

    @property
    def ber(self) -> float:
        return self.bit_errors / self.bits_compared if self.bits_compared else 0.0

    @property
    def erasure_rate(self) -> float:
        return self.erasures / self.pairs if self.pairs else 0.0

    @property
    def windowed_series(self) -> List[float]:
        return [k / self.window_size for k in self.window_errors]


class BerAccumulator:
    """Incremental BER over aligned (sent, received) code streams.

    Windows are consecutive runs of ``window`` compared bits (erased pairs
    are skipped); a trailing partial window is not reported.
    """

    def __init__(self, window: int = 200):
        if window < 1:
            raise ValueError("window must be positive")
        self.stats = BerStats(window_size=window)
        self._carry = np.empty(0, dtype=np.uint8)

    def update(self, sent: np.ndarray, received: np.ndarray) -> None:
        sent = np.asarray(sent, dtype=np.uint8)
        received = np.asarray(received, dtype=np.uint8)
        keep = received != ERASURE_CODE
        diff = sent[keep] ^ received[keep]
        flags = np.stack([(diff >> 1) & 1, diff & 1], axis=1).ravel()
        st = self.stats
        st.pairs += len(sent)
        st.erasures += int(len(sent) - keep.sum())
        st.bits_compared += len(flags)
        st.bit_errors += int(flags.sum())
        bits = np.concatenate([self._carry, flags]) if len(self._carry) else flags
        w = st.window_size
        k = len(bits) // w
        if k:
            st.window_errors.extend(bits[: k * w].reshape(k, w).sum(axis=1, dtype=np.int64).tolist())
        self._carry = bits[k * w:]


# --- plain-function forms -----------------------------------------------

Decoded = Union[BitPair, _Erasure]


def sdc_message_source(payload: bytes) -> List[BitPair]:
    return [BitPair.from_code(int(c)) for c in pack_payload(payload)]


def sdc_encode(bits: Iterable[BitPair]) -> List[EncodeOp]:
    return [encode_op_for_bits(b) for b in bits]


def sdc_decode(outcomes: Iterable[Optional[BsmOutcome]]) -> List[Decoded]:
    """Identified states decode to their bit pair; anything else is an erasure.

    ``None`` stands for an invalid correlation group.
    """
    out: List[Decoded] = []
    for o in outcomes:
        if o is None or o.is_ambiguous:
            out.append(ERASURE)
        else:
            out.append(bits_for_bell_state(o.state))
    return out


def _decoded_codes(items: Iterable[Decoded]) -> np.ndarray:
    return np.array([ERASURE_CODE if x is ERASURE else x.code for x in items], dtype=np.uint8)


def sdc_message_sink(items: Iterable[Decoded]) -> SinkReport:
    return unpack_codes(_decoded_codes(items))


def ber_meter(sent: Sequence[BitPair], received: Sequence[Decoded], window: int = 200) -> BerStats:
    """Cumulative and windowed BER of position-aligned streams."""
    if len(sent) != len(received):
        short, n, m = ("received", len(received), len(sent)) if len(received) < len(sent) else ("sent", len(sent), len(received))
        raise StreamMismatchError(short, n, m - 1)
    acc = BerAccumulator(window)
    acc.update(np.array([b.code for b in sent], dtype=np.uint8), _decoded_codes(received))
    return acc.stats


# --- blocks --------------------------------------------------------------

class VectorSource(Block):
    """Emits a fixed array of items, then end of stream."""

    def __init__(self, items, item_type: str, name: Optional[str] = None):
        super().__init__(name)
        self.outputs = (("out", item_type),)
        self._items = np.asarray(items)
        self._pos = 0

    def work(self, inputs, max_items):
        if self._pos >= len(self._items):
            return None
        chunk = self._items[self._pos:self._pos + max_items]
        self._pos += len(chunk)
        return [chunk]


class MessageSource(VectorSource):
    """Payload bytes as a stream of bit pairs."""

    def __init__(self, payload: bytes, name: Optional[str] = None):
        super().__init__(pack_payload(payload), BITPAIR, name)
        self.payload = bytes(payload)


class Passthrough(Block):
    def __init__(self, item_type: str, name: Optional[str] = None):
        super().__init__(name)
        self.inputs = (("in", item_type),)
        self.outputs = (("out", item_type),)

    def work(self, inputs, max_items):
        return [inputs[0]]


class VectorSink(Block):
    """Collects every item it receives."""

    def __init__(self, item_type: str, name: Optional[str] = None):
        super().__init__(name)
        self.inputs = (("in", item_type),)
        self._parts: List[np.ndarray] = []
        self.finished = False

    def work(self, inputs, max_items):
        self._parts.append(inputs[0])
        return []

    def stop(self, leftovers):
        self.finished = True

    @property
    def data(self) -> np.ndarray:
        return np.concatenate(self._parts) if self._parts else np.empty(0, dtype=np.uint8)


class SdcEncode(Block):
    inputs = (("in", BITPAIR),)
    outputs = (("out", ENCODE_OP),)

    def work(self, inputs, max_items):
        return [_OP_FOR_BITS[inputs[0]]]


class QmChannel(Block):
    """In-process QM server: create, transmit and measure one qubit per operator."""

    inputs = (("in", ENCODE_OP),)
    outputs = (("out", QUBIT_EVENTS),)

    def __init__(self, manager, name: Optional[str] = None):
        super().__init__(name)
        self.manager = manager

    def work(self, inputs, max_items):
        ops = inputs[0]
        n = len(ops)
        self.manager.encode_many(self.manager.expected_seq, _BITS_FOR_OP[ops])
        ids, ts, ch = self.manager.measure_arrays(n)
        return [events_records(ids, ts, ch)]


class QmEncodeSink(Block):
    """Transmitter side of the QM server: one ENCODE_REQ per operator."""

    inputs = (("in", ENCODE_OP),)

    def __init__(self, client, name: Optional[str] = None):
        super().__init__(name)
        self.client = client
        self.qubit_ids: List[int] = []

    def work(self, inputs, max_items):
        ids = self.client.encode_many(_BITS_FOR_OP[inputs[0]])
        self.qubit_ids.extend(np.asarray(ids).tolist())
        return []


class QmEventSource(Block):
    """Receiver side of the QM server: polls for measured qubits.

    Blocks in :meth:`work` until the server has something; ends after
    ``expected`` qubits.
    """

    outputs = (("out", QUBIT_EVENTS),)

    def __init__(self, client, expected: int, poll_interval: float = 0.01, name: Optional[str] = None):
        super().__init__(name)
        self.client = client
        self.expected = expected
        self.received = 0
        self.poll_interval = poll_interval
        self.empty_polls = 0

    def work(self, inputs, max_items):
        remaining = self.expected - self.received
        if remaining <= 0:
            return None
        want = min(max_items, remaining, 0xFFFF)
        while True:
            ids, ts, ch = self.client.measure_arrays(want)
            if len(ids):
                break
            self.empty_polls += 1
            time.sleep(self.poll_interval)
        self.received += len(ids)
        return [events_records(ids, ts, ch)]


def events_records(ids, ts, ch) -> np.ndarray:
    rec = np.empty(len(ids), dtype=QUBIT_EVENTS_DTYPE)
    rec["qubit_id"] = ids
    rec["ts"] = np.asarray(ts, dtype=np.uint64).reshape(-1, 2)
    rec["ch"] = np.asarray(ch, dtype=np.uint8).reshape(-1, 2)
    return rec


class Coincidence(Block):
    """Correlates each qubit's clicks into a Bell outcome code.

    A qubit whose slot yields no valid group, or more than one group, gets an
    invalid code.
    """

    inputs = (("in", QUBIT_EVENTS),)
    outputs = (("out", BSM_OUTCOME),)

    def __init__(self, clock: ClockModel, model: MeasurementModel, name: Optional[str] = None, event_log=None):
        super().__init__(name)
        self.clock = clock
        self.model = MeasurementModel(model)
        self.event_log = event_log
        self.invalid = 0

    def work(self, inputs, max_items):
        rec = inputs[0]
        ts = rec["ts"].ravel()
        ch = rec["ch"].ravel()
        if self.event_log is not None:
            self.event_log.writelines(f"{t},{c}\n" for t, c in zip(ts.tolist(), ch.tolist()))
        slots, codes = correlate_codes(ts, ch, self.clock, self.model)
        expected = rec["qubit_id"].astype(np.int64) - 1
        if len(slots) == len(expected) and np.array_equal(slots, expected):
            out = codes
        else:
            out = np.full(len(rec), INVALID_CODE, dtype=np.uint8)
            uniq, counts = np.unique(slots, return_counts=True)
            single = dict(zip(slots.tolist(), codes.tolist()))
            seen = dict(zip(uniq.tolist(), counts.tolist()))
            for i, s in enumerate(expected.tolist()):
                if seen.get(s) == 1:
                    out[i] = single[s]
        self.invalid += int((out > AMBIGUOUS_CODE).sum())
        return [out]


class SdcDecode(Block):
    inputs = (("in", BSM_OUTCOME),)
    outputs = (("out", DECODED),)

    def work(self, inputs, max_items):
        return [_DECODE[inputs[0]]]


class MessageSink(Block):
    """Buffers the complete decoded message."""

    inputs = (("in", DECODED),)

    def __init__(self, name: Optional[str] = None):
        super().__init__(name)
        self._parts: List[np.ndarray] = []
        self.report: Optional[SinkReport] = None

    def work(self, inputs, max_items):
        self._parts.append(inputs[0])
        return []

    def stop(self, leftovers):
        codes = np.concatenate(self._parts) if self._parts else np.empty(0, dtype=np.uint8)
        self.report = unpack_codes(codes)
        for note in self.report.notes:
            log.info("%s: %s", self.name, note)


class BerMeter(Block):
    inputs = (("sent", BITPAIR), ("received", DECODED))

    def __init__(self, window: int = 200, name: Optional[str] = None):
        super().__init__(name)
        self._acc = BerAccumulator(window)
        self.mismatch: Optional[StreamMismatchError] = None

    @property
    def stats(self) -> BerStats:
        return self._acc.stats

    def work(self, inputs, max_items):
        self._acc.update(inputs[0], inputs[1])
        return []

    def stop(self, leftovers):
        sent_left, recv_left = (len(x) for x in leftovers)
        done = self.stats.pairs
        if sent_left:
            self.mismatch = StreamMismatchError("received", done, done + sent_left - 1)
        elif recv_left:
            self.mismatch = StreamMismatchError("sent", done, done + recv_left - 1)
        if self.mismatch is not None:
            log.error("%s: %s", self.name, self.mismatch)
