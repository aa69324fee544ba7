"""Compiled and pure-Python kernels must agree bit for bit, and with the scalar model."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from sdqc import _pykernels, kernels
from sdqc.quantum import (
    BellState,
    BitPair,
    MeasurementModel,
    apply_channel_pauli,
    apply_encode,
    encode_op_for_bits,
    measure,
    pauli_for_uniform,
)

try:
    from sdqc import _ckernels
except ImportError:  # extension not built
    _ckernels = None

BACKENDS = [pytest.param(_pykernels, id="python")]
if _ckernels is not None:
    BACKENDS.append(pytest.param(_ckernels, id="cython"))

needs_c = pytest.mark.skipif(_ckernels is None, reason="compiled kernels not built")

uniforms = hnp.arrays(np.float64, st.integers(0, 300), elements=st.floats(0, 1, exclude_max=True))
probs = st.floats(0, 1)


@pytest.mark.parametrize("impl", BACKENDS)
def test_channel_matches_scalar_model(impl):
    rng = np.random.default_rng(0)
    for p in (0.0, 0.01, 0.3, 1.0):
        bits = rng.integers(0, 4, 2000).astype(np.uint8)
        u = rng.random(2000)
        states, errors = kernels.sdc_channel(bits, u, p, impl=impl)
        for b, uu, s, e in zip(bits, u, states, errors):
            err = pauli_for_uniform(float(uu), p)
            encoded = apply_encode(encode_op_for_bits(BitPair.from_code(int(b))), BellState.PHI_PLUS)
            assert e == err
            assert s == apply_channel_pauli(err, encoded)


@pytest.mark.parametrize("impl", BACKENDS)
@pytest.mark.parametrize("model", list(MeasurementModel))
def test_measure_matches_scalar_model(impl, model):
    out = kernels.bsm_measure(np.arange(4), model, impl=impl)
    assert out.tolist() == [measure(BellState(s), model).code for s in range(4)]


@needs_c
@settings(max_examples=60, deadline=None)
@given(u=uniforms, p=probs, data=st.data())
def test_channel_backends_agree(u, p, data):
    bits = data.draw(hnp.arrays(np.uint8, len(u), elements=st.integers(0, 3)))
    a = kernels.sdc_channel(bits, u, p, impl=_pykernels)
    b = kernels.sdc_channel(bits, u, p, impl=_ckernels)
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])


@needs_c
@settings(max_examples=60, deadline=None)
@given(data=st.data(), jitter=st.integers(0, 5))
def test_emit_backends_agree(data, jitter):
    n = data.draw(st.integers(0, 200))
    codes = data.draw(hnp.arrays(np.uint8, n, elements=st.integers(0, 4)))
    slots = np.arange(n, dtype=np.int64) * data.draw(st.integers(1, 3))
    u = data.draw(hnp.arrays(np.float64, 2 * n, elements=st.floats(0, 1, exclude_max=True)))
    a = kernels.emit_events(codes, slots, 2000, jitter, u, impl=_pykernels)
    b = kernels.emit_events(codes, slots, 2000, jitter, u, impl=_ckernels)
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])


@needs_c
@settings(max_examples=100, deadline=None)
@given(data=st.data(), model=st.sampled_from([0, 1]), window=st.integers(0, 10))
def test_correlate_backends_agree(data, model, window):
    gaps = data.draw(hnp.arrays(np.uint64, st.integers(0, 200), elements=st.integers(0, 12)))
    ts = np.cumsum(gaps, dtype=np.uint64)
    ch = data.draw(hnp.arrays(np.uint8, len(ts), elements=st.integers(0, 3)))
    a = kernels.correlate(ts, ch, 40, window, model, impl=_pykernels)
    b = kernels.correlate(ts, ch, 40, window, model, impl=_ckernels)
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])


def test_backend_selected():
    assert kernels.BACKEND in ("cython", "python")
    if _ckernels is not None:
        assert kernels.BACKEND == "cython" or kernels._impl is _pykernels


def test_wrappers_validate():
    with pytest.raises(ValueError):
        kernels.sdc_channel([0, 1], [0.5], 0.1)
    with pytest.raises(ValueError):
        kernels.sdc_channel([4], [0.5], 0.1)
    with pytest.raises(ValueError):
        kernels.correlate([5, 3], [0, 1], 2000, 4, 0)
    with pytest.raises(ValueError):
        kernels.emit_events([5], [0], 2000, 1, [0.1, 0.2])
