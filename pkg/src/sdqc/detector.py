"""Detector metadata emulation: timestamped clicks and coincidence correlation.

The receiver hardware is modelled as four detector channels behind a static
optical network. A measured photon pair clicks two channels at (almost) the
same time; the channel pair is the outcome's signature. Time is counted in
ticks of a 200 MHz clock.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from os import PathLike
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from . import kernels
from .quantum import AMBIGUOUS_PHI, BellState, BsmOutcome, MeasurementModel

TICK_NS = 5.0
CLOCK_HZ = 200_000_000
N_CHANNELS = 4

INVALID_REASONS = {
    kernels.SINGLETON: "singleton",
    kernels.OVERFULL: "overfull",
    kernels.UNMATCHED: "unmatched",
}


@dataclass(frozen=True)
class DetectionEvent:
    timestamp: int
    channel: int

    def __post_init__(self):
        if not 0 <= self.timestamp < 2**64:
            raise ValueError(f"timestamp out of u64 range: {self.timestamp}")
        if not 0 <= self.channel < N_CHANNELS:
            raise ValueError(f"detector channel must be 0-{N_CHANNELS - 1}, got {self.channel}")

    @property
    def time_ns(self) -> float:
        return self.timestamp * TICK_NS


@dataclass(frozen=True)
class ClockModel:
    """Slot pacing and timing tolerances, all in clock ticks."""

    symbol_period: int = 2000
    jitter_bound: int = 1
    coincidence_window: int = 4

    def __post_init__(self):
        if self.jitter_bound < 0:
            raise ValueError("jitter_bound must be non-negative")
        if self.coincidence_window < 2 * self.jitter_bound:
            raise ValueError("coincidence_window must be at least 2 * jitter_bound")
        if self.symbol_period <= 2 * self.coincidence_window:
            raise ValueError("symbol_period must exceed 2 * coincidence_window")


@dataclass(frozen=True)
class Coincidence:
    """One correlation group: a Bell outcome, or ``outcome=None`` with a reason."""

    slot: int
    outcome: Optional[BsmOutcome]
    reason: Optional[str] = None

    @property
    def valid(self) -> bool:
        return self.outcome is not None


_COMPLETE_TABLE = {
    BsmOutcome.identified(BellState.PHI_PLUS): (0, 1),
    BsmOutcome.identified(BellState.PHI_MINUS): (2, 3),
    BsmOutcome.identified(BellState.PSI_PLUS): (0, 2),
    BsmOutcome.identified(BellState.PSI_MINUS): (1, 3),
}
_LINEAR_OPTICAL_TABLE = {
    BsmOutcome.identified(BellState.PSI_PLUS): (0, 2),
    BsmOutcome.identified(BellState.PSI_MINUS): (1, 3),
    AMBIGUOUS_PHI: (0, 1),
}


def signature_table(model: MeasurementModel) -> Dict[BsmOutcome, Tuple[int, int]]:
    """Detector channel pair that each outcome of ``model`` lights up."""
    if MeasurementModel(model) == MeasurementModel.COMPLETE:
        return dict(_COMPLETE_TABLE)
    return dict(_LINEAR_OPTICAL_TABLE)


def _signature(outcome: BsmOutcome) -> Tuple[int, int]:
    if outcome.is_ambiguous:
        return _LINEAR_OPTICAL_TABLE[outcome]
    return _COMPLETE_TABLE[outcome]


def events_for_outcome(
    outcome: BsmOutcome, slot_index: int, clock: ClockModel, rng: np.random.Generator
) -> Tuple[DetectionEvent, DetectionEvent]:
    """Two clicks for one measured pair, each jittered independently.

    Consumes two uniforms from ``rng``. Timestamps that would fall before tick 0
    are clamped to 0. The pair is returned in (timestamp, channel) order.
    """
    ts, ch = emit_outcome_codes(np.array([outcome.code]), np.array([slot_index]), clock, rng)
    return (DetectionEvent(int(ts[0]), int(ch[0])), DetectionEvent(int(ts[1]), int(ch[1])))


def emit_outcome_codes(
    codes: np.ndarray, slots: np.ndarray, clock: ClockModel, rng: np.random.Generator
) -> Tuple[np.ndarray, np.ndarray]:
    """Vectorised :func:`events_for_outcome` over outcome codes (0-4)."""
    uniforms = rng.random(2 * len(codes))
    return kernels.emit_events(codes, slots, clock.symbol_period, clock.jitter_bound, uniforms)


def correlate_codes(
    timestamps: np.ndarray,
    channels: np.ndarray,
    clock: ClockModel,
    model: MeasurementModel = MeasurementModel.COMPLETE,
) -> Tuple[np.ndarray, np.ndarray]:
    """Array form of :func:`correlate_coincidences`: (slot indices, result codes 0-7)."""
    return kernels.correlate(timestamps, channels, clock.symbol_period, clock.coincidence_window, model)


def correlate_coincidences(
    events: Iterable[DetectionEvent],
    clock: ClockModel,
    model: MeasurementModel = MeasurementModel.COMPLETE,
) -> List[Coincidence]:
    """Group near-simultaneous clicks and read each group's Bell outcome.

    A group opens at an event and collects every later event no more than
    ``coincidence_window`` ticks after it. Two clicks forming a known signature
    give that outcome; anything else becomes an invalid mark. Events must be
    sorted by timestamp.
    """
    events = list(events)
    ts = np.array([e.timestamp for e in events], dtype=np.uint64)
    ch = np.array([e.channel for e in events], dtype=np.uint8)
    slots, codes = correlate_codes(ts, ch, clock, model)
    out = []
    for slot, code in zip(slots.tolist(), codes.tolist()):
        if code in INVALID_REASONS:
            out.append(Coincidence(slot, None, INVALID_REASONS[code]))
        else:
            out.append(Coincidence(slot, BsmOutcome.from_code(code)))
    return out


# --- event log export ------------------------------------------------------

PathOrFile = Union[str, PathLike, io.TextIOBase]


def write_event_log(dest: PathOrFile, events: Iterable[DetectionEvent]) -> int:
    """Write ``timestamp_ticks,channel`` lines; returns the number written."""
    if isinstance(dest, (str, PathLike)):
        with open(dest, "w", newline="") as fh:
            return write_event_log(fh, events)
    n = 0
    for e in events:
        dest.write(f"{e.timestamp},{e.channel}\n")
        n += 1
    return n


def read_event_log(src: PathOrFile) -> List[DetectionEvent]:
    if isinstance(src, (str, PathLike)):
        with open(src, newline="") as fh:
            return read_event_log(fh)
    events = []
    for lineno, row in enumerate(csv.reader(src), 1):
        if not row:
            continue
        if len(row) != 2:
            raise ValueError(f"line {lineno}: expected 'timestamp,channel'")
        events.append(DetectionEvent(int(row[0]), int(row[1])))
    return events


def events_from_arrays(timestamps: Sequence[int], channels: Sequence[int]) -> List[DetectionEvent]:
    return [DetectionEvent(int(t), int(c)) for t, c in zip(timestamps, channels)]
