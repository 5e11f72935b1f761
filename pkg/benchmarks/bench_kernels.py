"""Compare the compiled and pure-Python orbit kernels.

    python3 benchmarks/bench_kernels.py [--repeat 3]

Prints the best wall time per backend and checks that both produce the same
visit counts.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from srblab import _backend
from srblab.dynamics import make_system, run_orbit_counts
from srblab.empiric import CheckpointSchedule
from srblab.measure import GridPartition

CASES = [
    # (system, params, resolution, start, horizon)
    ("cat", {}, (64, 64), (0.1234, 0.5678), 100_000),
    ("skew_cat", {}, (16, 32, 32), (0.3, 0.1234, 0.5678), 50_000),
    ("bowen_eye", {"dt": 0.01}, (25, 25), (0.3, 0.2), 2_000),
]


def best_time(fn, repeat):
    best, out = float("inf"), None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if _backend._ckernels is None:
        print("compiled backend not built; nothing to compare")
        return 1
    print(f"{'case':<10} {'steps':>8} {'cython s':>10} {'python s':>10} {'speedup':>8}  same")
    for name, params, res, x0, horizon in CASES:
        system = make_system(name, params)
        part = GridPartition(system.domain, res)
        checks = CheckpointSchedule.geometric(min(1000, horizon), 1.25, horizon).points

        def run(mod):
            return lambda: run_orbit_counts(system, x0, part, checks, backend=mod)

        tc, rc = best_time(run(_backend._ckernels), args.repeat)
        tp, rp = best_time(run(_backend._pykernels), 1)
        same = np.array_equal(rc[0], rp[0]) and rc[1:] == rp[1:]
        print(f"{name:<10} {horizon:>8} {tc:>10.4f} {tp:>10.4f} {tp / tc:>8.1f}  {same}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
