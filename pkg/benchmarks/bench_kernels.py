"""Benchmark the numba kernel backend against the pure numpy/python fallback.

The two backends are selected by the GRBB_NUMBA environment variable at
import time, so this script re-runs itself in two subprocesses (GRBB_NUMBA=1
and GRBB_NUMBA=0), times the same seeded workloads in each, and prints a
comparison table.  JIT compilation happens before timing starts.

Usage:
    python benchmarks/bench_kernels.py [--quick] [--csv OUT.csv]
"""

import argparse
import csv
import json
import os
import subprocess
import sys
import time

import numpy as np


def _workloads(scale: float):
    from grbb import _kernels

    n = lambda x: max(1, int(x * scale))
    vals01 = np.array([0, 1], dtype=np.int64)
    cdf01 = np.array([0.5, 1.0])
    q_table = np.full((21, 8), 1.0 / 8)
    mu = np.array([0.4, 0.3, 0.2, 0.1])
    be_vals = np.arange(26, dtype=np.int64)
    be_cdf = np.linspace(0.2, 1.0, 26)

    def samples(law, reps):
        def run(rng):
            for _ in range(reps):
                _kernels.occupancy_sample(law, 1024, 512, rng)
        return run

    def queue(iters):
        def run(rng):
            pi = np.zeros(256)
            pi[0] = 1.0
            _kernels.queue_iterate(pi, mu, 0.0, iters)
        return run

    return [
        (f"fd_sample L=1024 x{n(20_000)}", samples(_kernels.FD, n(20_000))),
        (f"mb_sample L=1024 x{n(20_000)}", samples(_kernels.MB, n(20_000))),
        (f"be_sample L=1024 x{n(20_000)}", samples(_kernels.BE, n(20_000))),
        (f"chaos replica L=2048 T=20 x{n(50)}",
         lambda rng: [_kernels.chaos_replica_sup_tv(_kernels.MB, 2048, 20, vals01, cdf01,
                                                    q_table, rng) for _ in range(n(50))]),
        (f"flattening time L=500 N=250 x{n(20)}",
         lambda rng: [_kernels.fd_time_to_flat(500, 250, 10**6, rng) for _ in range(n(20))]),
        (f"queue iterate W=256 x{n(20_000)} iters", queue(n(20_000))),
        (f"mb coupling L=50 N=25 x{n(200_000)}",
         lambda rng: _kernels.mb_coupling_batch(50, 25, n(200_000), rng)),
        (f"be coupling L=50 N=25 x{n(100_000)}",
         lambda rng: _kernels.be_coupling_batch(50, 25, n(100_000), be_vals, be_cdf, rng)),
    ]


def _time_backend(scale: float) -> dict:
    from grbb import _kernels

    if _kernels.BACKEND == "numba":
        _kernels.warmup()  # compile outside the timed region
    out = {"backend": _kernels.BACKEND, "times": {}}
    for name, runner in _workloads(scale):
        best = float("inf")
        for _ in range(3):
            rng = np.random.default_rng(9)
            t0 = time.perf_counter()
            runner(rng)
            best = min(best, time.perf_counter() - t0)
        out["times"][name] = best
    return out


def _subprocess_times(flag: str, scale: float) -> dict | None:
    env = dict(os.environ, GRBB_NUMBA=flag)
    proc = subprocess.run(
        [sys.executable, os.path.abspath(__file__), "--backend-only", "--scale", str(scale)],
        env=env, capture_output=True, text=True,
    )
    if proc.returncode != 0:
        print(f"backend GRBB_NUMBA={flag} unavailable:\n{proc.stderr.strip()}", file=sys.stderr)
        return None
    return json.loads(proc.stdout)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--quick", action="store_true", help="scale workloads down 20x")
    parser.add_argument("--csv", help="also write results to this CSV file")
    parser.add_argument("--backend-only", action="store_true", help=argparse.SUPPRESS)
    parser.add_argument("--scale", type=float, default=None, help=argparse.SUPPRESS)
    args = parser.parse_args(argv)
    scale = args.scale if args.scale is not None else (0.05 if args.quick else 1.0)

    if args.backend_only:
        json.dump(_time_backend(scale), sys.stdout)
        return 0

    jit = _subprocess_times("1", scale)
    py = _subprocess_times("0", scale)
    if py is None:
        return 1
    rows = []
    for name in py["times"]:
        p = py["times"][name]
        if jit is not None:
            j = jit["times"][name]
            rows.append((name, j, p, p / j))
            print(f"{name:44s} numba {j:9.4f}s  python {p:9.4f}s  x{p / j:7.1f}")
        else:
            rows.append((name, float("nan"), p, float("nan")))
            print(f"{name:44s} python {p:9.4f}s")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["workload", "numba_s", "python_s", "speedup"])
            w.writerows(rows)
        print(f"wrote {args.csv}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
