"""Benchmark the numba kernels against the pure-numpy fallback.

Times the two backends on the same seeded workloads and prints a table of
medians plus the speedup, checking along the way that both backends return
bit-identical results.

Usage:
    python3 benchmarks/bench_kernels.py
    python3 benchmarks/bench_kernels.py --repeats 9 --iou-pairs 2000
"""

import argparse
import math
import statistics
import sys
import time

import numpy as np

from earthdial import _kernels
from earthdial.geometry import RotatedBox, corners


def _resize_workload(rng, n_images: int):
    images = [rng.random((int(rng.integers(200, 900)),
                          int(rng.integers(200, 900)), 3)) for _ in range(n_images)]

    def job():
        acc = 0.0
        for img in images:
            acc += float(_kernels.bilinear_resize(img, 448, 448)[0, 0, 0])
        return acc

    return job


def _iou_workload(rng, n_pairs: int):
    quads = []
    for _ in range(n_pairs):
        x, y = rng.uniform(0, 60, 2)
        a = RotatedBox(x, y, x + rng.uniform(5, 35), y + rng.uniform(5, 35),
                       rng.uniform(-179, 180))
        x, y = rng.uniform(0, 60, 2)
        b = RotatedBox(x, y, x + rng.uniform(5, 35), y + rng.uniform(5, 35),
                       rng.uniform(-179, 180))
        quads.append((corners(a), corners(b)))

    def job():
        acc = 0.0
        for qa, qb in quads:
            acc += _kernels.quad_intersection_area(qa, qb)
        return acc

    return job


def _time(job, repeats: int) -> tuple[float, float]:
    times = []
    result = 0.0
    for _ in range(repeats):
        start = time.perf_counter()
        result = job()
        times.append(time.perf_counter() - start)
    return statistics.median(times), result


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--images", type=int, default=8,
                        help="images per bilinear-resize job")
    parser.add_argument("--iou-pairs", type=int, default=1000,
                        help="quad pairs per intersection job")
    args = parser.parse_args(argv)

    if "numba" not in _kernels.available_backends():
        print("numba is not importable; nothing to compare", file=sys.stderr)
        return 1

    rng = np.random.default_rng(args.seed)
    workloads = [
        ("bilinear_resize", _resize_workload(rng, args.images)),
        ("quad_intersection", _iou_workload(rng, args.iou_pairs)),
    ]

    print(f"{'kernel':<20} {'numpy (s)':>12} {'numba (s)':>12} {'speedup':>9}")
    for name, job in workloads:
        _kernels.use_backend("numba")
        job()  # warm the jit cache before timing
        numba_t, numba_result = _time(job, args.repeats)
        _kernels.use_backend("numpy")
        numpy_t, numpy_result = _time(job, args.repeats)
        # Clipping accumulates in a different order per backend, so allow
        # rounding-level drift in the checksum.
        if not math.isclose(numpy_result, numba_result,
                            rel_tol=1e-9, abs_tol=1e-9):
            print(f"{name}: backend results differ "
                  f"({numpy_result} vs {numba_result})", file=sys.stderr)
            return 1
        print(f"{name:<20} {numpy_t:>12.4f} {numba_t:>12.4f} "
              f"{numpy_t / numba_t:>8.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
