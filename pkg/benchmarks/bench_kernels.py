"""Compiled versus pure-Python sigma-delta loop.

    python3 benchmarks/bench_kernels.py --samples 200000
"""
import argparse
import time

import numpy as np

from rofsim import _kernels_py
from rofsim import sigma_delta as sd

try:
    from rofsim import _kernels
except ImportError:
    _kernels = None


def timed(fn, args, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser(description="sigma-delta loop backend comparison")
    ap.add_argument("--samples", type=int, default=200_000)
    ap.add_argument("--order", type=int, default=4)
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args()

    fs, f0 = 10e9, 2.35e9
    synth = sd.synthesize_ntf(sd.SdmDesign(args.order, f0 / fs, 416.67, 1.5, fs))
    lp = synth.loop
    u = 0.25 * np.cos(2 * np.pi * (f0 + 1e6) * np.arange(args.samples) / fs)
    call = (u, np.ascontiguousarray(lp.A), lp.bu, lp.bv, lp.c, lp.du, 10.0)

    t_py, (bits_py, _) = timed(lambda *a: _kernels_py.sdm_loop(*a, np.zeros(lp.n_states)), call, 1)
    print(f"python : {t_py:8.3f} s  ({args.samples / t_py / 1e6:7.3f} MS/s)")
    if _kernels is None:
        print("cython : extension not built")
        return
    t_cy, (bits_cy, _) = timed(lambda *a: _kernels.sdm_loop(*a, np.zeros(lp.n_states)), call, args.repeats)
    print(f"cython : {t_cy:8.3f} s  ({args.samples / t_cy / 1e6:7.3f} MS/s)")
    print(f"speedup: {t_py / t_cy:.0f}x, outputs identical: {np.array_equal(np.asarray(bits_py), np.asarray(bits_cy))}")


if __name__ == "__main__":
    main()
