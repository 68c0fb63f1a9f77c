#!/usr/bin/env python3
"""Benchmark the compiled concentration-step kernel against the numpy fallback.

Times the operations that dominate a fit: single passes on a fixed subset and
a full multi-start estimate, on a few dataset shapes.  Also verifies that the
two backends select identical subsets on the benchmark data.

Usage: python benchmarks/kernel_benchmark.py [--repeats 5]
"""

import argparse
import time

import numpy as np

from ivmcd import ImcdConfig, build_moments, imcd_fit
from ivmcd import _kernels
from ivmcd.simulate import ScenarioConfig, generate_scenario
from ivmcd.univariate import AdjBox

SHAPES = [(500, 5), (500, 20), (2000, 5)]


def bench_pass(backend, ds, mom, idx, m, repeats):
    fn = _kernels.get_backend(backend).cstep_pass
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        for _ in range(200):
            fn(ds.centers, ds.ranges, mom.mean, mom.cross, idx, m)
        best = min(best, (time.perf_counter() - t0) / 200)
    return best


def bench_fit(backend, ds, mom, repeats):
    _kernels.use_backend(backend)
    cfg = ImcdConfig(seed=7, reweight=AdjBox(1.5))
    best = float("inf")
    fit = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        fit = imcd_fit(ds, mom, cfg)
        best = min(best, time.perf_counter() - t0)
    return best, fit


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()

    backends = _kernels.available_backends()
    print(f"available backends: {', '.join(backends)} "
          f"(active: {_kernels.BACKEND})")
    if len(backends) < 2:
        print("compiled backend not built; timing the fallback only")

    active = _kernels.BACKEND
    try:
        for n, p in SHAPES:
            ds, _, _ = generate_scenario(ScenarioConfig(
                p=p, n=n, epsilon=0.1, scheme="center", latent="uniform",
                seed=42))
            mom = build_moments(ds.specs)
            m = int(0.75 * n)
            idx = np.sort(np.random.default_rng(0).choice(
                n, m, replace=False)).astype(np.int64)

            print(f"\nn={n} p={p} (m={m})")
            pass_times = {}
            fit_times = {}
            fits = {}
            for backend in backends:
                pass_times[backend] = bench_pass(backend, ds, mom, idx, m,
                                                 args.repeats)
                fit_times[backend], fits[backend] = bench_fit(backend, ds, mom,
                                                              args.repeats)
                print(f"  {backend:>7}: cstep pass {pass_times[backend] * 1e6:8.1f} us"
                      f" | full fit {fit_times[backend]:7.3f} s")
            if len(backends) == 2:
                speed_pass = pass_times["python"] / pass_times["cython"]
                speed_fit = fit_times["python"] / fit_times["cython"]
                same = np.array_equal(fits["python"].subset,
                                      fits["cython"].subset)
                print(f"  speedup: pass {speed_pass:.1f}x, fit {speed_fit:.1f}x"
                      f" | identical subsets: {same}")
    finally:
        _kernels.use_backend(active)


if __name__ == "__main__":
    main()
