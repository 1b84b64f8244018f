"""Compare the compiled composition core against the pure-numpy fallback.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from kperturb import _pykernels

try:
    from kperturb import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def _best(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def lag_case(period, n_lags, n_freq, rng):
    shape = (period, n_lags, n_freq)
    a = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    b = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    w = np.zeros(period)
    w[1::2] = 0.1
    return a, b, w, 0.5


def dense_case(t, n, rng):
    a = rng.random((t, n, t, n))
    b = rng.random((t, n, t, n))
    w = np.zeros(t)
    w[1::2] = 0.1
    return a, b, w, 0.25


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)
    cases = [("lag_convolve", "P=2 A=33 F=1025", lag_case(2, 33, 1025, rng)),
             ("lag_convolve", "P=2 A=65 F=1025", lag_case(2, 65, 1025, rng)),
             ("lag_convolve", "P=2 A=129 F=257", lag_case(2, 129, 257, rng)),
             ("dense_compose", "T=9 N=32", dense_case(9, 32, rng)),
             ("dense_compose", "T=17 N=64", dense_case(17, 64, rng))]
    print(f"{'kernel':<14} {'size':<18} {'python [s]':>11} {'cython [s]':>11} {'speedup':>8} {'max|diff|':>10}")
    for name, label, case in cases:
        t_py, out_py = _best(lambda: getattr(_pykernels, name)(*case), args.repeat)
        if _ckernels is None:
            print(f"{name:<14} {label:<18} {t_py:11.4f} {'n/a':>11}")
            continue
        t_c, out_c = _best(lambda: getattr(_ckernels, name)(*case), args.repeat)
        diff = float(np.max(np.abs(np.asarray(out_py) - np.asarray(out_c))))
        print(f"{name:<14} {label:<18} {t_py:11.4f} {t_c:11.4f} {t_py / t_c:8.2f} {diff:10.2e}")


if __name__ == "__main__":
    main()
