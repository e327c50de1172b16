"""Benchmark the compiled kernel backend against the pure-NumPy fallback.

Times the three hot kernels (batch homography fitting, batch rigid fitting,
batched grid insertion) on identical inputs and prints per-item latencies and
the speedup of the compiled extension. Run from the repository root:

    python3 benchmarks/bench_backends.py [--batch 20000] [--repeats 5]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from gridransac import _kernels
from gridransac._kernels import pyback
from gridransac.grid import GridConfig, RandomGrid


def _time(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def bench_fit_homography(backend, batch, repeats, rng):
    src = rng.uniform(0.0, 640.0, size=(batch, 4, 2))
    dst = rng.uniform(0.0, 640.0, size=(batch, 4, 2))
    return _time(lambda: backend.fit_homography_batch(src, dst), repeats)

def bench_fit_rigid(backend, batch, repeats, rng):
    src = rng.uniform(-100.0, 100.0, size=(batch, 3, 3))
    dst = rng.uniform(-100.0, 100.0, size=(batch, 3, 3))
    return _time(lambda: backend.fit_rigid_batch(src, dst), repeats)

def bench_grid_insert(backend, batch, repeats, rng):
    # clustered vectors so a realistic share of inserts hit occupied slots
    vecs = rng.integers(0, 40, size=(batch, 8)) * 1.8 + rng.uniform(
        0.0, 0.4, size=(batch, 8)
    )
    ids = np.arange(batch, dtype=np.int64)
    models = rng.normal(size=(batch, 9))
    skip = np.zeros(batch, dtype=np.uint8)
    cfg = GridConfig(c=1.8, t=1.0, lam=8, L=4, table_bits=16, seed=0)

    def run():
        grid = RandomGrid(cfg, model_dim=9)
        backend.grid_insert_batch(grid, vecs, ids, models, skip)

    return _time(run, repeats)


KERNELS = [
    ("fit_homography_batch", bench_fit_homography),
    ("fit_rigid_batch", bench_fit_rigid),
    ("grid_insert_batch", bench_grid_insert),
]


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--batch", type=int, default=20_000)
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    if _kernels.fastback is None:
        raise SystemExit(
            "compiled backend is not built; reinstall the package "
            "(pip install -e . --no-build-isolation) before benchmarking"
        )

    print(f"batch={args.batch} repeats={args.repeats} (best-of timing)")
    print(f"{'kernel':<24}{'python':>14}{'compiled':>14}{'speedup':>10}")
    for name, bench in KERNELS:
        rng = np.random.default_rng(args.seed)
        t_py = bench(pyback, args.batch, args.repeats, rng)
        rng = np.random.default_rng(args.seed)
        t_c = bench(_kernels.fastback, args.batch, args.repeats, rng)
        per_py = t_py / args.batch * 1e6
        per_c = t_c / args.batch * 1e6
        print(f"{name:<24}{per_py:>11.2f} us{per_c:>11.2f} us{t_py / t_c:>9.1f}x")


if __name__ == "__main__":
    main()
