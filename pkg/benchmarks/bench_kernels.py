"""Compare the numba-compiled matching kernel with the interpreted one.

    python3 benchmarks/bench_kernels.py [--lengths 250,1000,4000] [--pairs 20]

Inputs are encoded once per pair, so only the kernel call is timed.  The
first compiled call (JIT compilation or cache load) is reported separately.
"""
import argparse
import statistics
import time

import numpy as np

from threadrefine import harness, kernels
from threadrefine.matcher import _merged_init


def encoded_pairs(length, n, seed):
    cfg = harness.GenConfig(seed=seed, length=(length, length), locks=(max(1, length // 40), max(1, length // 20)),
                            n_transforms=(3, 10), pairs=n)
    out = []
    for p in harness.gen_corpus(cfg):
        enc = kernels.encode_pair(p.transformed, p.original, _merged_init(p.transformed, p.original))
        out.append(enc.arrays)
    return out


def best_of(fn, repeats=3):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter_ns()
        fn()
        best = min(best, time.perf_counter_ns() - t0)
    return best / 1000.0


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--lengths", default="250,1000,2000,4000")
    ap.add_argument("--pairs", type=int, default=20)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()

    if not kernels.HAVE_NUMBA:
        print("numba is not installed; only the python backend is available")
        return

    warm = encoded_pairs(64, 1, 0)[0]
    t0 = time.perf_counter()
    kernels.match_kernel(*warm, force="numba")
    print(f"first compiled call: {(time.perf_counter() - t0) * 1e3:.1f} ms")

    print(f"{'len':>6} {'python_us':>12} {'numba_us':>10} {'speedup':>8}")
    for length in (int(x) for x in args.lengths.split(",")):
        pairs = encoded_pairs(length, args.pairs, args.seed)
        py, nb = [], []
        for arrs in pairs:
            a = kernels.match_kernel(*arrs, force="python")
            b = kernels.match_kernel(*arrs, force="numba")
            assert np.array_equal(a, b), "backends disagree"
            py.append(best_of(lambda: kernels.match_kernel(*arrs, force="python")))
            nb.append(best_of(lambda: kernels.match_kernel(*arrs, force="numba")))
        mp, mn = statistics.median(py), statistics.median(nb)
        print(f"{length:>6} {mp:>12.1f} {mn:>10.1f} {mp / mn:>7.1f}x")


if __name__ == "__main__":
    main()
