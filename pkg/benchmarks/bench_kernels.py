#!/usr/bin/env python3
"""Benchmark the compiled simulation kernels against the numpy fallback.

Times the quartic closed-loop run and its average-system counterpart on both
paths and prints the speedup. Run from the repo root:

    python3 benchmarks/bench_kernels.py [--t1 SECONDS] [--repeats N]
"""

import argparse
import time

import numpy as np

import esc_lab as el
from esc_lab._kernels import numba_available


def best_of(repeats, fn):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--t1", type=float, default=100.0, help="simulated horizon (default 100)")
    ap.add_argument("--repeats", type=int, default=3, help="timing repeats (default 3)")
    args = ap.parse_args()

    cost = el.quartic_cost()
    dither = el.new_dither([0.02], [1], 10.0)
    params = el.EscParams(k=1.0, epsilon=0.05, omega_l=[0.25], omega_xi=1.0)
    state0 = np.array([2.0, 0.81, 0.0])
    h, stride = el.oscillation_step(dither.period, dither.r_max, 0.05)
    nsteps = int(round(args.t1 / h))

    cases = [
        (
            f"closed loop ({nsteps} RK4 steps)",
            lambda path: el.simulate_rmspesc(
                cost, dither, params, state0, 0.0, args.t1, h, stride, force_path=path
            ),
        ),
        (
            f"baseline loop ({nsteps} RK4 steps)",
            lambda path: el.simulate_gesc(
                cost, dither, params, state0[[0, 2]], 0.0, args.t1, h, stride, force_path=path
            ),
        ),
        (
            "average system (quadrature rhs)",
            lambda path: el.simulate_average(
                cost, dither, params, state0, 0.0, args.t1, 0.0125, 4, force_path=path
            ),
        ),
    ]

    if not numba_available():
        print("numba not importable; only the numpy path is available")
        for name, run in cases:
            t = best_of(args.repeats, lambda: run("numpy"))
            print(f"{name:38s} numpy {t * 1e3:9.1f} ms")
        return 0

    print(f"{'case':38s} {'numpy':>12s} {'numba':>12s} {'speedup':>9s}")
    for name, run in cases:
        run("kernel")  # compile outside the timed region
        ref = run("numpy")
        jit = run("kernel")
        if not np.allclose(ref.states[-1], jit.states[-1], rtol=1e-9, atol=1e-12):
            raise AssertionError(f"paths disagree for {name}")
        t_np = best_of(args.repeats, lambda: run("numpy"))
        t_nb = best_of(args.repeats, lambda: run("kernel"))
        print(f"{name:38s} {t_np * 1e3:9.1f} ms {t_nb * 1e3:9.1f} ms {t_np / t_nb:8.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
