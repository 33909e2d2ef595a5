"""Time the compiled kernels against their numpy fallbacks and check they agree.

Run: python3 benchmarks/bench_kernels.py [--rows N]
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from cascadeflow import _kernels_py, kernels


def best_of(fn, repeats: int = 3) -> float:
    times = []
    for _ in range(repeats):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--rows", type=int, default=50_000)
    ap.add_argument("--features", type=int, default=12)
    ap.add_argument("--queries", type=int, default=2_000)
    args = ap.parse_args()
    rng = np.random.default_rng(0)

    bins = rng.integers(0, 65, size=(args.rows, args.features)).astype(np.uint8)
    rows = np.sort(rng.choice(args.rows, size=args.rows // 2, replace=False)).astype(np.int64)
    grad = rng.standard_normal(args.rows)
    hess = rng.random(args.rows)
    query = rng.random((args.queries, args.features))
    ref = rng.random((args.rows // 5, args.features))

    print(f"kernel backend at import: {kernels.BACKEND}")
    if kernels.BACKEND != "compiled":
        print("compiled extension not built; only the numpy timings are meaningful")
    cases = [
        ("build_histogram", lambda impl: impl.build_histogram(bins, rows, grad, hess, 65)),
        ("min_sq_distances", lambda impl: impl.min_sq_distances(query, ref)),
    ]
    print(f"{'kernel':<18}{'compiled s':>12}{'numpy s':>12}{'speedup':>10}  max |diff|")
    for name, call in cases:
        t_py = best_of(lambda: call(_kernels_py))
        out_py = call(_kernels_py)
        if kernels.BACKEND == "compiled":
            t_c = best_of(lambda: call(kernels._impl))
            diff = float(np.max(np.abs(call(kernels._impl) - out_py)))
            print(f"{name:<18}{t_c:>12.4f}{t_py:>12.4f}{t_py / t_c:>10.1f}  {diff:.2e}")
        else:
            print(f"{name:<18}{'-':>12}{t_py:>12.4f}{'-':>10}")


if __name__ == "__main__":
    main()
