#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure-numpy fallback.

Times the two loop-bound hot paths on representative workloads:

* the dense simplex behind the minimum-L1 membership LPs (the inner loop of
  the dataset-level inseparability report), and
* the k-NN majority vote with its deterministic tie-break chain.

Run:  python benchmarks/bench_kernels.py [--repeats 5]
"""

import argparse
import time

import numpy as np

from anml._kernels import pyimpl

try:
    from anml._kernels import _fast
except ImportError:
    _fast = None


def time_best(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def bench_simplex(impl, problems):
    def run():
        for A, b, c in problems:
            impl.simplex_min(A, b, c)
    return run


def bench_vote(impl, labels, dists, ks, n_classes):
    def run():
        impl.knn_vote(labels, dists, ks, n_classes)
    return run


def make_lp_batch(rng, count=300, s=6, d=5):
    problems = []
    for _ in range(count):
        V = rng.normal(size=(s, d))
        r = rng.normal(size=s)
        b = V.T @ r
        problems.append((np.hstack([V.T, -V.T]), b, np.ones(2 * s)))
    return problems


def make_vote_batch(rng, n_test=400, n_train=2000, n_classes=10):
    dists = np.sort(rng.uniform(size=(n_test, n_train)), axis=1)
    labels = rng.integers(1, n_classes + 1, size=(n_test, n_train))
    ks = np.arange(1, 41)
    return labels, dists, ks, n_classes


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    rng = np.random.default_rng(args.seed)
    problems = make_lp_batch(rng)
    vote_args = make_vote_batch(rng)

    rows = []
    py_lp = time_best(bench_simplex(pyimpl, problems), args.repeats)
    py_vote = time_best(bench_vote(pyimpl, *vote_args), args.repeats)
    rows.append(("python", py_lp, py_vote))
    if _fast is not None:
        fast_lp = time_best(bench_simplex(_fast, problems), args.repeats)
        fast_vote = time_best(bench_vote(_fast, *vote_args), args.repeats)
        rows.append(("compiled", fast_lp, fast_vote))

        # Sanity: identical outputs.
        for A, b, c in problems[:20]:
            sp, xp = pyimpl.simplex_min(A, b, c)
            sf, xf = _fast.simplex_min(A, b, c)
            assert sp == sf and np.array_equal(xp, xf)

    print(f"{'backend':<10} {'simplex_300_lps':>16} {'knn_vote_400x2000':>18}")
    for name, lp, vote in rows:
        print(f"{name:<10} {lp:>14.4f}s {vote:>16.4f}s")
    if _fast is not None:
        print(f"{'speedup':<10} {py_lp / fast_lp:>15.1f}x "
              f"{py_vote / fast_vote:>16.1f}x")
    else:
        print("compiled backend unavailable; only the fallback was timed")


if __name__ == "__main__":
    main()
