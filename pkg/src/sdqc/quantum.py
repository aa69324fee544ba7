"""Bell states, super-dense coding operators, Pauli noise and Bell-state measurement.

States are symbolic: the protocol never leaves the Bell basis, so a Bell state is
one of four labels and every operator is a permutation of those labels (global
phases dropped). A small state-vector representation is kept alongside purely
as an oracle for checking the symbolic tables.

Integer codes are shared with the stream kernels: a Bell state's code equals the
2-bit message that selects it, ``b1 << 1 | b2``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Optional, Tuple

import numpy as np


class BellState(enum.IntEnum):
    PHI_PLUS = 0
    PSI_PLUS = 1
    PHI_MINUS = 2
    PSI_MINUS = 3


class EncodeOp(enum.IntEnum):
    I = 0
    X = 1
    Z = 2
    XZ = 3


class ChannelPauli(enum.IntEnum):
    I = 0
    X = 1
    Y = 2
    Z = 3


class MeasurementModel(enum.IntEnum):
    """Which Bell-state analyser the receiver is modelled with (wire code = value)."""

    COMPLETE = 0
    LINEAR_OPTICAL = 1

    @classmethod
    def parse(cls, text: str) -> "MeasurementModel":
        key = text.strip().lower()
        if key in ("complete", "c"):
            return cls.COMPLETE
        if key in ("lo", "linear-optical", "linear_optical"):
            return cls.LINEAR_OPTICAL
        raise ValueError(f"unknown measurement model {text!r}")


@dataclass(frozen=True)
class BitPair:
    b1: int
    b2: int

    def __post_init__(self):
        if self.b1 not in (0, 1) or self.b2 not in (0, 1):
            raise ValueError(f"bit pair components must be 0 or 1, got ({self.b1}, {self.b2})")

    @property
    def code(self) -> int:
        return self.b1 << 1 | self.b2

    @classmethod
    def from_code(cls, code: int) -> "BitPair":
        if not 0 <= code <= 3:
            raise ValueError(f"bit pair code out of range: {code}")
        return cls(code >> 1, code & 1)

    @classmethod
    def parse(cls, text: str) -> "BitPair":
        if len(text) != 2 or set(text) - {"0", "1"}:
            raise ValueError(f"not a bit pair: {text!r}")
        return cls(int(text[0]), int(text[1]))

    def __str__(self) -> str:
        return f"{self.b1}{self.b2}"


@dataclass(frozen=True)
class BsmOutcome:
    """Result of a Bell-state measurement.

    ``state`` is the identified Bell state, or ``None`` when the analyser can only
    say "one of the Phi states" (the linear-optical ambiguity).
    """

    state: Optional[BellState]

    @classmethod
    def identified(cls, state: BellState) -> "BsmOutcome":
        return cls(BellState(state))

    @property
    def is_ambiguous(self) -> bool:
        return self.state is None

    @property
    def code(self) -> int:
        return AMBIGUOUS_CODE if self.state is None else int(self.state)

    @classmethod
    def from_code(cls, code: int) -> "BsmOutcome":
        if code == AMBIGUOUS_CODE:
            return AMBIGUOUS_PHI
        return cls(BellState(code))

    def __str__(self) -> str:
        return "AmbiguousPhi" if self.state is None else f"Identified({self.state.name})"


AMBIGUOUS_CODE = 4
AMBIGUOUS_PHI = BsmOutcome(None)

# Rows of the dense-coding table: message -> operator -> resulting Bell state.
_ENCODE_TABLE = {
    (0, 0): (EncodeOp.I, BellState.PHI_PLUS),
    (0, 1): (EncodeOp.X, BellState.PSI_PLUS),
    (1, 0): (EncodeOp.Z, BellState.PHI_MINUS),
    (1, 1): (EncodeOp.XZ, BellState.PSI_MINUS),
}
_BITS_FOR_STATE = {state: BitPair(*bits) for bits, (_, state) in _ENCODE_TABLE.items()}
_BITS_FOR_OP = {op: BitPair(*bits) for bits, (op, _) in _ENCODE_TABLE.items()}

P, S, M, N = BellState.PHI_PLUS, BellState.PSI_PLUS, BellState.PHI_MINUS, BellState.PSI_MINUS

# Action of a single-qubit operator on Alice's qubit, up to global phase.
# Columns follow BellState order (PHI_PLUS, PSI_PLUS, PHI_MINUS, PSI_MINUS).
_PAULI_ACTION = {
    ChannelPauli.I: (P, S, M, N),
    ChannelPauli.X: (S, P, N, M),
    ChannelPauli.Y: (N, M, S, P),
    ChannelPauli.Z: (M, N, P, S),
}
_ENCODE_ACTION = {
    EncodeOp.I: _PAULI_ACTION[ChannelPauli.I],
    EncodeOp.X: _PAULI_ACTION[ChannelPauli.X],
    EncodeOp.Z: _PAULI_ACTION[ChannelPauli.Z],
    EncodeOp.XZ: _PAULI_ACTION[ChannelPauli.Y],
}
del P, S, M, N

LINEAR_OPTICAL_IDENTIFIED = frozenset({BellState.PSI_PLUS, BellState.PSI_MINUS})


def encode_op_for_bits(bits: BitPair) -> EncodeOp:
    return _ENCODE_TABLE[(bits.b1, bits.b2)][0]


def bits_for_encode_op(op: EncodeOp) -> BitPair:
    return _BITS_FOR_OP[EncodeOp(op)]


def bits_for_bell_state(state: BellState) -> BitPair:
    return _BITS_FOR_STATE[BellState(state)]


def apply_encode(op: EncodeOp, state: BellState) -> BellState:
    return _ENCODE_ACTION[EncodeOp(op)][state]


def apply_channel_pauli(err: ChannelPauli, state: BellState) -> BellState:
    return _PAULI_ACTION[ChannelPauli(err)][state]


def check_probability(p: float) -> float:
    p = float(p)
    if not 0.0 <= p <= 1.0:  # also rejects NaN
        raise ValueError(f"noise parameter must lie in [0, 1], got {p}")
    return p


def pauli_for_uniform(u: float, p: float) -> ChannelPauli:
    """Map one uniform draw in [0, 1) to the depolarizing channel's error.

    ``[0, 1-p)`` is the identity; the rest is split into three equal bins for
    X, Y and Z. The stream kernels use exactly this arithmetic.
    """
    keep = 1.0 - p
    if u < keep:
        return ChannelPauli.I
    k = int((u - keep) / (p / 3.0))
    return ChannelPauli(1 + min(k, 2))


def depolarize(state: BellState, p: float, rng: np.random.Generator) -> Tuple[BellState, ChannelPauli]:
    """Send Alice's qubit through a depolarizing channel.

    Consumes exactly one uniform from ``rng``. Returns the post-channel state
    and the Pauli that was applied.
    """
    p = check_probability(p)
    err = pauli_for_uniform(float(rng.random()), p)
    return apply_channel_pauli(err, state), err


def measure_complete_bsm(state: BellState) -> BsmOutcome:
    return BsmOutcome.identified(state)


def measure_linear_optical_bsm(
    state: BellState, identified: Iterable[BellState] = LINEAR_OPTICAL_IDENTIFIED
) -> BsmOutcome:
    """Static linear-optics analyser: only ``identified`` states are resolved.

    With the default set the two Psi states leave distinct detector signatures
    while Phi+ and Phi- look the same.
    """
    if BellState(state) in frozenset(identified):
        return BsmOutcome.identified(state)
    return AMBIGUOUS_PHI


def measure(state: BellState, model: MeasurementModel) -> BsmOutcome:
    if model == MeasurementModel.COMPLETE:
        return measure_complete_bsm(state)
    return measure_linear_optical_bsm(state)


# --- state-vector oracle -------------------------------------------------

_SQ = 1.0 / np.sqrt(2.0)
# amplitudes over |00>, |01>, |10>, |11>; first qubit is Alice's
_BELL_VECTORS = {
    BellState.PHI_PLUS: np.array([_SQ, 0, 0, _SQ], dtype=complex),
    BellState.PHI_MINUS: np.array([_SQ, 0, 0, -_SQ], dtype=complex),
    BellState.PSI_PLUS: np.array([0, _SQ, _SQ, 0], dtype=complex),
    BellState.PSI_MINUS: np.array([0, _SQ, -_SQ, 0], dtype=complex),
}

PAULI_MATRICES = {
    ChannelPauli.I: np.eye(2, dtype=complex),
    ChannelPauli.X: np.array([[0, 1], [1, 0]], dtype=complex),
    ChannelPauli.Y: np.array([[0, -1j], [1j, 0]], dtype=complex),
    ChannelPauli.Z: np.array([[1, 0], [0, -1]], dtype=complex),
}

ENCODE_MATRICES = {
    EncodeOp.I: PAULI_MATRICES[ChannelPauli.I],
    EncodeOp.X: PAULI_MATRICES[ChannelPauli.X],
    EncodeOp.Z: PAULI_MATRICES[ChannelPauli.Z],
    EncodeOp.XZ: PAULI_MATRICES[ChannelPauli.X] @ PAULI_MATRICES[ChannelPauli.Z],
}

BELL_TOLERANCE = 1e-9


def bell_to_statevector(state: BellState) -> np.ndarray:
    return _BELL_VECTORS[BellState(state)].copy()


def apply_to_alice(matrix: np.ndarray, vector: np.ndarray) -> np.ndarray:
    return np.kron(matrix, np.eye(2)) @ vector


def statevector_to_bell(v: np.ndarray, tol: float = BELL_TOLERANCE) -> BellState:
    """Identify which Bell state ``v`` is, ignoring global phase.

    Raises ValueError if ``v`` is not within ``tol`` (amplitude distance after
    phase alignment) of any Bell state.
    """
    v = np.asarray(v, dtype=complex)
    if v.shape != (4,):
        raise ValueError(f"expected 4 amplitudes, got shape {v.shape}")
    best, best_dist = None, np.inf
    for state, ref in _BELL_VECTORS.items():
        overlap = np.vdot(ref, v)
        if abs(overlap) == 0:
            continue
        aligned = v * np.conj(overlap) / abs(overlap)
        dist = np.linalg.norm(aligned - ref)
        if dist < best_dist:
            best, best_dist = state, dist
    if best is None or best_dist > tol:
        raise ValueError(f"vector is not a Bell state (distance {best_dist:.3g})")
    return best
