"""Software-defined super-dense coding: flow graphs, QM server and detector emulation."""

from .quantum import (
    AMBIGUOUS_PHI,
    BellState,
    BitPair,
    BsmOutcome,
    ChannelPauli,
    EncodeOp,
    MeasurementModel,
)

__version__ = "0.1.0"

__all__ = [
    "AMBIGUOUS_PHI",
    "BellState",
    "BitPair",
    "BsmOutcome",
    "ChannelPauli",
    "EncodeOp",
    "MeasurementModel",
]
