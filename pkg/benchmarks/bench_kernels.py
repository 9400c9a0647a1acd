"""Timing comparison of the numba image kernels against the numpy fallback.

Runs each kernel on representative shapes and prints a table of median
wall-clock times per call for both backends, plus the speedup. The numpy
fallback is obtained in-process (the private ``_numpy_*`` functions), so a
single run covers both; ``BACKEND`` reports what the public API dispatches to.

Usage: python3 benchmarks/bench_kernels.py [--repeats N]
"""

from __future__ import annotations

import argparse
import statistics
import time

import numpy as np

from glianet import kernels


def bench(fn, args, repeats: int) -> float:
    fn(*args)  # warm-up (numba compiles on first call)
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeats", type=int, default=20)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    img = rng.random((384, 512, 3))
    kernel = np.exp(-0.5 * (np.arange(-4, 5) / 1.5) ** 2)
    kernel /= kernel.sum()

    cases = [
        ("bilinear_resize 384x512->224x224", "bilinear_resize", (img, 224, 224)),
        ("blur_separable 384x512 k=9", "blur_separable", (img, kernel)),
        ("block_mean 384x512 b=4", "block_mean", (img, 4)),
    ]

    print(f"active backend: {kernels.BACKEND}")
    print(f"{'case':<36} {'numpy':>10} {'numba':>10} {'speedup':>8}")
    for label, name, call_args in cases:
        t_np = bench(getattr(kernels, f"_numpy_{name}"), call_args, args.repeats)
        row = f"{label:<36} {t_np * 1e3:>8.2f}ms"
        if kernels.BACKEND == "numba":
            t_nb = bench(getattr(kernels, name), call_args, args.repeats)
            row += f" {t_nb * 1e3:>8.2f}ms {t_np / t_nb:>7.1f}x"
        else:
            row += f" {'-':>10} {'-':>8}"
        print(row)


if __name__ == "__main__":
    main()
