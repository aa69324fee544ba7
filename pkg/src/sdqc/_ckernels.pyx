# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled stream kernels. Semantics are defined by ``_pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.stdint cimport uint8_t, int64_t, uint64_t

cnp.import_array()

cdef uint8_t[16] PAULI_ACTION = [
    0, 1, 2, 3,
    1, 0, 3, 2,
    3, 2, 1, 0,
    2, 3, 0, 1,
]
cdef uint8_t[5] EMIT_A = [0, 0, 2, 1, 0]
cdef uint8_t[5] EMIT_B = [1, 2, 3, 3, 1]
cdef uint8_t[32] SIGNATURE = [
    7, 0, 1, 7,
    7, 7, 7, 3,
    7, 7, 7, 2,
    7, 7, 7, 7,

    7, 4, 1, 7,
    7, 7, 7, 3,
    7, 7, 7, 7,
    7, 7, 7, 7,
]

DEF SINGLETON = 5
DEF OVERFULL = 6
DEF UNMATCHED = 7


def sdc_channel(const uint8_t[::1] bits, const double[::1] uniforms, double p):
    cdef Py_ssize_t n = bits.shape[0], i
    states_arr = np.empty(n, dtype=np.uint8)
    errors_arr = np.empty(n, dtype=np.uint8)
    cdef uint8_t[::1] states = states_arr
    cdef uint8_t[::1] errors = errors_arr
    cdef double keep = 1.0 - p
    cdef double third = p / 3.0
    cdef double u
    cdef int64_t k
    cdef uint8_t err
    with nogil:
        for i in range(n):
            u = uniforms[i]
            if u < keep:
                err = 0
            else:
                k = <int64_t>((u - keep) / third)
                err = 1 + (k if k < 2 else 2)
            errors[i] = err
            states[i] = PAULI_ACTION[err * 4 + bits[i]]
    return states_arr, errors_arr


def bsm_measure(const uint8_t[::1] states, int model):
    cdef Py_ssize_t n = states.shape[0], i
    out_arr = np.empty(n, dtype=np.uint8)
    cdef uint8_t[::1] out = out_arr
    cdef uint8_t s
    with nogil:
        for i in range(n):
            s = states[i]
            if model == 0 or (s & 1):
                out[i] = s
            else:
                out[i] = 4
    return out_arr


def emit_events(const uint8_t[::1] outcomes, const int64_t[::1] slots, int64_t period,
                int64_t jitter, const double[::1] uniforms):
    cdef Py_ssize_t n = outcomes.shape[0], i
    ts_arr = np.empty(2 * n, dtype=np.uint64)
    ch_arr = np.empty(2 * n, dtype=np.uint8)
    cdef uint64_t[::1] ts = ts_arr
    cdef uint8_t[::1] ch = ch_arr
    cdef int64_t width = 2 * jitter + 1
    cdef int64_t top = 2 * jitter
    cdef int64_t base, ka, kb, ta, tb, tmp
    cdef uint8_t a, b, o, tc
    with nogil:
        for i in range(n):
            base = slots[i] * period
            ka = <int64_t>(uniforms[2 * i] * width)
            kb = <int64_t>(uniforms[2 * i + 1] * width)
            ta = base + (ka if ka < top else top) - jitter
            tb = base + (kb if kb < top else top) - jitter
            if ta < 0:
                ta = 0
            if tb < 0:
                tb = 0
            o = outcomes[i]
            a = EMIT_A[o]
            b = EMIT_B[o]
            if tb < ta or (tb == ta and b < a):
                tmp = ta; ta = tb; tb = tmp
                tc = a; a = b; b = tc
            ts[2 * i] = <uint64_t>ta
            ts[2 * i + 1] = <uint64_t>tb
            ch[2 * i] = a
            ch[2 * i + 1] = b
    return ts_arr, ch_arr


def correlate(const uint64_t[::1] ts, const uint8_t[::1] ch, int64_t period,
              int64_t window, int model):
    cdef Py_ssize_t m = ts.shape[0], i = 0, j, size, k = 0
    slots_arr = np.empty(m, dtype=np.int64)
    codes_arr = np.empty(m, dtype=np.uint8)
    cdef int64_t[::1] slots = slots_arr
    cdef uint8_t[::1] codes = codes_arr
    cdef int64_t t0
    cdef int64_t half = period // 2
    cdef int base = model * 16
    cdef uint8_t a, b, code
    with nogil:
        while i < m:
            t0 = <int64_t>ts[i]
            j = i + 1
            while j < m and <int64_t>ts[j] - t0 <= window:
                j += 1
            size = j - i
            if size == 1:
                code = SINGLETON
            elif size == 2:
                a = ch[i]
                b = ch[i + 1]
                if a > b:
                    a, b = b, a
                code = SIGNATURE[base + a * 4 + b] if b < 4 else UNMATCHED
            else:
                code = OVERFULL
            slots[k] = (t0 + half) // period
            codes[k] = code
            k += 1
            i = j
    return slots_arr[:k].copy(), codes_arr[:k].copy()
