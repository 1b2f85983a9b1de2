"""Per-symbol-rate dither frequency search for the bandwidth sweeps.

For each symbol rate, tries dither frequencies around the hardware-tuned
value and keeps the one with the lowest mean single-carrier EVM. Seeds are
disjoint from the ones the tests use.

    python3 benchmarks/dither_search.py --seeds 101 102 103 104 105
"""
import argparse
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from rofsim.bench import pipelines as pl
from rofsim.bench.config import config_from_dict
from rofsim.bench.experiments import EXPERIMENTS


def _evm(args):
    rate, fd, seed = args
    base = config_from_dict(EXPERIMENTS["bandwidth"].defaults)
    cfg = base.with_overrides({"waveform.symbol_rate": rate, "dither.track_symbol_rate": False,
                               "dither.frequency": fd})
    return pl.uplink_p2p(cfg, seed).evm[0]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[101, 102, 103, 104, 105])
    ap.add_argument("--offsets", type=float, nargs="+", default=[-12, -8, -4, 0, 4, 8, 12, 16],
                    help="MHz around the hardware-tuned frequency")
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()
    rates, hw = zip(*pl.HARDWARE_DITHER_TABLE)
    for rate, f0 in zip(rates, hw):
        cands = [f0 + o * 1e6 for o in args.offsets if f0 + o * 1e6 > 0]
        jobs = [(rate, fd, s) for fd in cands for s in args.seeds]
        with ProcessPoolExecutor(args.workers) as pool:
            evm = np.array(list(pool.map(_evm, jobs))).reshape(len(cands), len(args.seeds)).mean(axis=1)
        best = int(np.argmin(evm))
        row = " ".join(f"{fd / 1e6:g}:{e:.3f}" for fd, e in zip(cands, evm))
        print(f"{rate / 1e6:g} MBd -> {cands[best] / 1e6:g} MHz ({evm[best]:.3f}%)  [{row}]", flush=True)


if __name__ == "__main__":
    main()
