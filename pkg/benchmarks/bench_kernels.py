"""Compare compiled and pure-Python kernels on representative input sizes.

    python3 benchmarks/bench_kernels.py [--n 200000] [--repeat 5]

Both backends see identical inputs; outputs are checked for equality before
timing so a speedup never hides a divergence.
"""

import argparse
import sys
import timeit

import numpy as np

from sdqc import _pykernels

try:
    from sdqc import _ckernels
except ImportError:
    sys.exit("compiled kernels are not built; run `pip install -e . --no-build-isolation` first")


def cases(n: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    bits = rng.integers(0, 4, n).astype(np.uint8)
    u = rng.random(n)
    states, _ = _ckernels.sdc_channel(bits, u, 0.1)
    outcomes = np.asarray(_ckernels.bsm_measure(states, 0))
    slots = np.arange(n, dtype=np.int64)
    ts, ch = _ckernels.emit_events(outcomes, slots, 2000, 1, rng.random(2 * n))
    return {
        "sdc_channel": (bits, u, 0.1),
        "bsm_measure": (states, 1),
        "emit_events": (outcomes, slots, 2000, 1, rng.random(2 * n)),
        "correlate": (np.asarray(ts), np.asarray(ch), 2000, 4, 0),
    }


def same(a, b):
    if isinstance(a, tuple):
        return all(same(x, y) for x, y in zip(a, b))
    return np.array_equal(np.asarray(a), np.asarray(b))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=200_000, help="items per call")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    print(f"{'kernel':<12} {'python ms':>10} {'cython ms':>10} {'speedup':>8}")
    for name, call_args in cases(args.n).items():
        py, cy = getattr(_pykernels, name), getattr(_ckernels, name)
        if not same(py(*call_args), cy(*call_args)):
            sys.exit(f"{name}: backends disagree")
        t_py = min(timeit.repeat(lambda: py(*call_args), number=1, repeat=args.repeat)) * 1e3
        t_cy = min(timeit.repeat(lambda: cy(*call_args), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:<12} {t_py:>10.2f} {t_cy:>10.2f} {t_py / t_cy:>7.1f}x")


if __name__ == "__main__":
    main()
