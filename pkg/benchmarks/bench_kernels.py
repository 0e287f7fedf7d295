#!/usr/bin/env python3
"""Benchmark the jitted kernels against their pure-Python fallbacks.

Usage: python benchmarks/bench_kernels.py [--quick]

Runs each hot loop through both backends on a training-sized workload
and prints per-call times and the speedup. With numba disabled via
ANNEALRBM_DISABLE_NUMBA the script still runs, timing the fallback only.
"""

import argparse
import time

import numpy as np

from annealrbm import _kernels


def time_per_call(fn, args_iter, calls):
    start = time.perf_counter()
    for _ in range(calls):
        fn(*next(args_iter))
    return (time.perf_counter() - start) / calls


def anneal_args(n, sweeps, seed):
    rng = np.random.default_rng(seed)
    j = np.triu(rng.normal(size=(n, n)), 1)
    full = j + j.T
    fields = rng.normal(size=n)
    betas = np.linspace(0.1, 1.0, sweeps)
    out = np.empty(n, dtype=np.int8)
    while True:
        yield fields, full, betas, rng.random(n), rng.random((sweeps, n)), out


def gibbs_args(nv, nh, steps, seed):
    rng = np.random.default_rng(seed)
    w = rng.normal(scale=0.3, size=(nv, nh))
    b = rng.normal(size=nh)
    c = rng.normal(size=nv)
    out = np.empty((steps, nv + nh), dtype=np.int8)
    while True:
        v0 = (rng.random(nv) < 0.5).astype(float)
        yield w, b, c, v0, rng.random((steps, nh)), rng.random((steps, nv)), out


def run(name, selected_calls, fallback_calls, args_factory):
    print(f"\n{name}")
    args = args_factory()
    if _kernels.NUMBA_ACTIVE:
        selected = (_kernels.anneal_read if "anneal" in name
                    else _kernels.gibbs_chain)
        selected(*next(args))  # compile outside the timed region
        jit_time = time_per_call(selected, args, selected_calls)
        print(f"  numba @njit : {jit_time * 1e6:9.1f} us/call "
              f"({selected_calls} calls)")
    else:
        jit_time = None
        print("  numba @njit : unavailable (disabled or not installed)")
    pure = (_kernels._anneal_read if "anneal" in name
            else _kernels._gibbs_chain)
    pure_time = time_per_call(pure, args, fallback_calls)
    print(f"  pure python : {pure_time * 1e6:9.1f} us/call "
          f"({fallback_calls} calls)")
    if jit_time:
        print(f"  speedup     : {pure_time / jit_time:9.1f}x")


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--quick", action="store_true",
                        help="fewer calls, for smoke testing")
    args = parser.parse_args()
    scale = 10 if args.quick else 1
    print(f"backend selected at import: "
          f"{'numba' if _kernels.NUMBA_ACTIVE else 'pure python'} "
          f"(set {_kernels.DISABLE_ENV_VAR}=1 to force the fallback)")
    run("anneal_read (n=54 vars, 100 sweeps; one SA read)",
        2000 // scale, 20 // scale or 2,
        lambda: anneal_args(54, 100, seed=1))
    run("gibbs_chain (20v x 16h, 10000 steps)",
        200 // scale, 4 // scale or 2,
        lambda: gibbs_args(20, 16, 10_000, seed=2))


if __name__ == "__main__":
    main()
