"""Timing comparison of the dissimilarity kernel backends.

Runs the batch kernel over a grid of map sizes with both the compiled
extension and the numpy fallback, reports best-of-N wall times and the
speedup. The two backends are also cross-checked on every input, so a
silent divergence would show up here before it shows up in results.

Usage: python benchmarks/bench_cdm.py [--repeats N]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from rfmloc._kernels import available_backends


def make_inputs(rng: np.random.Generator, n_points: int, n_features: int):
    ref = rng.uniform(-100.0, -40.0, size=(n_points, n_features))
    ref[rng.random(ref.shape) < 0.3] = np.nan
    obs = rng.uniform(-100.0, -40.0, size=n_features)
    obs[rng.random(n_features) < 0.3] = np.nan
    weights = rng.uniform(0.05, 1.0, size=n_features)
    return ref, obs, weights


def best_of(fn, args, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=7)
    ns = parser.parse_args()

    backends = available_backends()
    if "cython" not in backends:
        print("compiled extension not available; timing numpy only")

    rng = np.random.default_rng(42)
    sizes = [(100, 10), (1_000, 20), (5_000, 50), (20_000, 100)]
    header = f"{'points':>8} {'features':>9}"
    for name in backends:
        header += f" {name + ' (ms)':>13}"
    if len(backends) == 2:
        header += f" {'speedup':>8}"
    print(header)

    for n_points, n_features in sizes:
        ref, obs, weights = make_inputs(rng, n_points, n_features)
        args = (ref, obs, weights, 3.0, 3.0, -110.0, 2.0, 0.0)

        results = {name: fn(*args) for name, fn in backends.items()}
        if len(results) == 2:
            gap = np.max(np.abs(results["numpy"] - results["cython"]))
            assert gap <= 1e-9 * np.abs(results["numpy"]).max(), gap

        row = f"{n_points:>8} {n_features:>9}"
        times = {name: best_of(fn, args, ns.repeats)
                 for name, fn in backends.items()}
        for name in backends:
            row += f" {times[name] * 1e3:>13.3f}"
        if len(times) == 2:
            row += f" {times['numpy'] / times['cython']:>7.1f}x"
        print(row)


if __name__ == "__main__":
    main()
