#!/usr/bin/env python3
"""Benchmark the numba kernels against the pure-numpy fallback.

Workload sizes mirror production settings: p=300 static dimensions, q=1024
context dimensions, minibatches of 64, 150 sentences per lemma for k-means,
and a multi-thousand-entry bank scan for neighbor ranking.

Usage:
    python benchmarks/bench_kernels.py [--repeats N]

The same benchmark honors CDES_BACKEND for ad-hoc runs, but by default it
times both paths in one process via set_backend().
"""

import argparse
import time

import numpy as np

from cdes import backend


def timeit(fn, repeats):
    # one untimed call first: triggers JIT compilation on the numba path
    fn()
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def make_workloads(seed=0):
    rng = np.random.default_rng(seed)
    p, q, batch, n_senses = 300, 1024, 64, 40
    align = (
        rng.normal(size=(p, q)),
        rng.normal(size=(n_senses, p)),
        rng.normal(size=(batch, p)),
        rng.normal(size=(batch, q)),
        rng.integers(0, n_senses, size=batch).astype(np.int64),
    )
    sqdist = (rng.normal(size=(150, q)), rng.normal(size=(12, q)))
    cosine = (rng.normal(size=(5000, p + 2 * q)), rng.normal(size=p + 2 * q))
    return align, sqdist, cosine


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    align, sqdist, cosine = make_workloads()
    kernels = {
        "alignment_batch (64x300x1024, GELU)": lambda: backend.alignment_batch(
            *align, backend.ACT_GELU
        ),
        "pairwise_sqdist (150x1024 vs 12)": lambda: backend.pairwise_sqdist(*sqdist),
        "cosine_scores (5000 x 2348)": lambda: backend.cosine_scores(*cosine),
    }

    backends = ["numpy"] + (["numba"] if backend.HAVE_NUMBA else [])
    results = {}
    for name in backends:
        backend.set_backend(name)
        for label, fn in kernels.items():
            results[(label, name)] = timeit(fn, args.repeats)

    width = max(len(label) for label in kernels)
    header = f"{'kernel':<{width}}  " + "".join(f"{b:>12}" for b in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)
    print("-" * len(header))
    for label in kernels:
        row = f"{label:<{width}}  "
        for name in backends:
            row += f"{results[(label, name)] * 1e3:>10.2f}ms"
        if len(backends) == 2:
            ratio = results[(label, "numpy")] / results[(label, "numba")]
            row += f"{ratio:>9.2f}x"
        print(row)

    if not backend.HAVE_NUMBA:
        print("\nnumba not importable: only the numpy fallback was timed")


if __name__ == "__main__":
    main()
