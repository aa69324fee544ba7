"""Pure-Python stream kernels.

Reference implementation of the hot loops; ``_ckernels.pyx`` mirrors it line
for line and must produce bit-identical output. Codes follow ``sdqc.quantum``:
bit pairs and Bell states share codes 0-3, 4 is the ambiguous Phi outcome,
5-7 are correlator failures (singleton, overfull, unmatched).
"""

import numpy as np

# PAULI_ACTION[err * 4 + state]; err order I, X, Y, Z
PAULI_ACTION = (
    0, 1, 2, 3,
    1, 0, 3, 2,
    3, 2, 1, 0,
    2, 3, 0, 1,
)
# detector channel pair per outcome code 0-4
EMIT_A = (0, 0, 2, 1, 0)
EMIT_B = (1, 2, 3, 3, 1)
# SIGNATURE[model * 16 + lo * 4 + hi] -> outcome code, 7 = unmatched
SIGNATURE = (
    7, 0, 1, 7,
    7, 7, 7, 3,
    7, 7, 7, 2,
    7, 7, 7, 7,

    7, 4, 1, 7,
    7, 7, 7, 3,
    7, 7, 7, 7,
    7, 7, 7, 7,
)

SINGLETON = 5
OVERFULL = 6
UNMATCHED = 7


def sdc_channel(bits, uniforms, p):
    """Encode bit pairs onto Phi+ and apply depolarizing noise to Alice's qubit."""
    n = len(bits)
    states = np.empty(n, dtype=np.uint8)
    errors = np.empty(n, dtype=np.uint8)
    keep = 1.0 - p
    third = p / 3.0
    action = PAULI_ACTION
    for i, (b, u) in enumerate(zip(bits.tolist(), uniforms.tolist())):
        if u < keep:
            err = 0
        else:
            k = int((u - keep) / third)
            err = 1 + (k if k < 2 else 2)
        errors[i] = err
        # the encoded state's code equals the message code
        states[i] = action[err * 4 + b]
    return states, errors


def bsm_measure(states, model):
    if model == 0:
        return np.array(states, dtype=np.uint8, copy=True)
    out = np.empty(len(states), dtype=np.uint8)
    for i, s in enumerate(states.tolist()):
        out[i] = s if s & 1 else 4
    return out


def emit_events(outcomes, slots, period, jitter, uniforms):
    """Two timestamped detector clicks per outcome; each pair sorted by (time, channel)."""
    n = len(outcomes)
    ts = np.empty(2 * n, dtype=np.uint64)
    ch = np.empty(2 * n, dtype=np.uint8)
    width = 2 * jitter + 1
    top = 2 * jitter
    u = uniforms.tolist()
    for i, (o, slot) in enumerate(zip(outcomes.tolist(), slots.tolist())):
        base = slot * period
        ka = int(u[2 * i] * width)
        kb = int(u[2 * i + 1] * width)
        ta = base + (ka if ka < top else top) - jitter
        tb = base + (kb if kb < top else top) - jitter
        if ta < 0:
            ta = 0
        if tb < 0:
            tb = 0
        a = EMIT_A[o]
        b = EMIT_B[o]
        if tb < ta or (tb == ta and b < a):
            ta, tb, a, b = tb, ta, b, a
        ts[2 * i] = ta
        ts[2 * i + 1] = tb
        ch[2 * i] = a
        ch[2 * i + 1] = b
    return ts, ch


def correlate(ts, ch, period, window, model):
    """Greedy coincidence grouping over a time-sorted event stream."""
    t = ts.tolist()
    c = ch.tolist()
    m = len(t)
    slots = []
    codes = []
    half = period // 2
    base = model * 16
    i = 0
    while i < m:
        t0 = t[i]
        j = i + 1
        while j < m and t[j] - t0 <= window:
            j += 1
        size = j - i
        if size == 1:
            code = SINGLETON
        elif size == 2:
            a, b = c[i], c[i + 1]
            if a > b:
                a, b = b, a
            code = SIGNATURE[base + a * 4 + b] if b < 4 else UNMATCHED
        else:
            code = OVERFULL
        slots.append((t0 + half) // period)
        codes.append(code)
        i = j
    return np.array(slots, dtype=np.int64), np.array(codes, dtype=np.uint8)
