"""Benchmark the compiled bitset kernels against the pure-numpy fallback.

Run:  python benchmarks/bench_kernel.py [--pairs 200000] [--atoms 6] [--reps 200]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from rebacminer._core import _bitops_py

try:
    from rebacminer._core import _bitops
except ImportError:
    _bitops = None


def _bench(kernel, mat, other, reps):
    out = np.empty(mat.shape[1], dtype=np.uint64)
    start = time.perf_counter()
    acc = 0
    for _ in range(reps):
        kernel.and_reduce(mat, out)
        acc += kernel.popcount(out)
        acc += kernel.popcount_and(out, other)
        acc += kernel.popcount_andnot(out, other)
    return time.perf_counter() - start, acc


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--pairs", type=int, default=200_000)
    ap.add_argument("--atoms", type=int, default=6)
    ap.add_argument("--reps", type=int, default=200)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    n_words = (args.pairs + 63) // 64
    mat = rng.integers(0, 2**64, size=(args.atoms, n_words), dtype=np.uint64)
    other = rng.integers(0, 2**64, size=n_words, dtype=np.uint64)

    t_py, acc_py = _bench(_bitops_py, mat, other, args.reps)
    print(f"pure numpy : {t_py:.4f}s  ({args.reps} reps, {args.pairs} pairs, "
          f"{args.atoms} atoms)")
    if _bitops is None:
        print("compiled   : not built (install with the C extension enabled)")
        return
    t_c, acc_c = _bench(_bitops, mat, other, args.reps)
    assert acc_py == acc_c, "backends disagree"
    print(f"compiled   : {t_c:.4f}s  (speedup {t_py / t_c:.2f}x)")


if __name__ == "__main__":
    main()
