"""Benchmark the ROC counting kernels: numba JIT vs pure numpy.

Run:  python3 benchmarks/bench_metrics.py [--n 20000] [--repeats 200]

The kernel is the inner loop of every AUC/pAUC call, which the evaluation
protocol invokes thousands of times (repetitions x horizons x models x splits).
Set PHD_DISABLE_NUMBA=1 to check that the fallback path is used.
"""

import argparse
import time

import numpy as np

from phd._roc import numba_enabled, roc_counts_numpy
from phd.evaluation import auc


def make_case(rng, n, tie_fraction=0.3):
    scores = rng.standard_normal(n)
    ties = rng.random(n) < tie_fraction
    scores[ties] = np.round(scores[ties], 1)
    labels = rng.integers(0, 2, n)
    order = np.argsort(-scores, kind="mergesort")
    return labels[order].astype(np.int64), scores[order].astype(np.float64)


def bench(fn, cases, repeats):
    fn(*cases[0])  # warm-up (JIT compile / cache)
    start = time.perf_counter()
    for _ in range(repeats):
        for labels, scores in cases:
            fn(labels, scores)
    return (time.perf_counter() - start) / (repeats * len(cases))


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n", type=int, default=20_000, help="samples per case")
    parser.add_argument("--cases", type=int, default=10, help="distinct inputs")
    parser.add_argument("--repeats", type=int, default=100)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    cases = [make_case(rng, args.n) for _ in range(args.cases)]

    t_numpy = bench(roc_counts_numpy, cases, args.repeats)
    print(f"numpy  kernel: {t_numpy * 1e6:9.1f} us/call  (n={args.n})")

    if numba_enabled():
        from phd._roc import roc_counts_numba
        t_numba = bench(roc_counts_numba, cases, args.repeats)
        print(f"numba  kernel: {t_numba * 1e6:9.1f} us/call  "
              f"(speedup x{t_numpy / t_numba:.2f})")
        for labels, scores in cases:
            a = roc_counts_numpy(labels, scores)
            b = roc_counts_numba(labels, scores)
            assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
        print("outputs identical across backends")
    else:
        print("numba backend disabled (PHD_DISABLE_NUMBA set or numba missing)")

    # end-to-end metric timing for context
    scores = rng.standard_normal(args.n)
    labels = rng.integers(0, 2, args.n)
    start = time.perf_counter()
    for _ in range(50):
        auc(scores, labels)
    print(f"auc() end-to-end: {(time.perf_counter() - start) / 50 * 1e3:7.2f} ms/call")


if __name__ == "__main__":
    main()
