"""Stream kernel dispatch.

The compiled ``_ckernels`` extension is used when it was built; otherwise the
pure-Python ``_pykernels`` module is selected at import. Setting
``SDQC_PURE_PYTHON=1`` forces the fallback. Both backends are bit-identical.

Wrappers here normalise dtypes and contiguity so callers can pass any
array-like.
"""

import os

import numpy as np

from . import _pykernels

if os.environ.get("SDQC_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pykernels
else:
    try:
        from . import _ckernels as _impl
    except ImportError:
        _impl = _pykernels

BACKEND = "cython" if _impl is not _pykernels else "python"

SINGLETON = _pykernels.SINGLETON
OVERFULL = _pykernels.OVERFULL
UNMATCHED = _pykernels.UNMATCHED


def _u8(a):
    return np.ascontiguousarray(a, dtype=np.uint8)


def _f8(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def sdc_channel(bits, uniforms, p, impl=None):
    bits, uniforms = _u8(bits), _f8(uniforms)
    if bits.shape != uniforms.shape:
        raise ValueError("need one uniform per bit pair")
    if bits.size and bits.max() > 3:
        raise ValueError("bit pair codes must be 0-3")
    return (impl or _impl).sdc_channel(bits, uniforms, float(p))


def bsm_measure(states, model, impl=None):
    states = _u8(states)
    if states.size and states.max() > 3:
        raise ValueError("Bell state codes must be 0-3")
    return (impl or _impl).bsm_measure(states, int(model))


def emit_events(outcomes, slots, period, jitter, uniforms, impl=None):
    outcomes = _u8(outcomes)
    slots = np.ascontiguousarray(slots, dtype=np.int64)
    uniforms = _f8(uniforms)
    if outcomes.shape != slots.shape or uniforms.shape != (2 * outcomes.size,):
        raise ValueError("need one slot and two uniforms per outcome")
    if outcomes.size and outcomes.max() > 4:
        raise ValueError("outcome codes must be 0-4")
    return (impl or _impl).emit_events(outcomes, slots, int(period), int(jitter), uniforms)


def correlate(ts, ch, period, window, model, impl=None):
    ts = np.ascontiguousarray(ts, dtype=np.uint64)
    ch = _u8(ch)
    if ts.shape != ch.shape:
        raise ValueError("timestamps and channels differ in length")
    if ts.size > 1 and np.any(ts[1:] < ts[:-1]):
        raise ValueError("events must be sorted by timestamp")
    return (impl or _impl).correlate(ts, ch, int(period), int(window), int(model))
