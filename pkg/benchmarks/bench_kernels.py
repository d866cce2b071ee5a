"""Time the compiled and pure-Python sweep kernels on the same chain.

    python3 benchmarks/bench_kernels.py [--iterations N] [--T T] [--n n]

Both kernels consume identical random streams, so the script also checks
that they produce the same trace.
"""
import argparse
import time

import numpy as np

from hmnem import COMPILED_AVAILABLE, SamplerConfig, SimConfig, run_chain, simulate


def bench(backend, cfg, data, repeats):
    best, trace = float("inf"), None
    for _ in range(repeats):
        t0 = time.perf_counter()
        trace = run_chain(cfg, data, backend=backend)
        best = min(best, time.perf_counter() - t0)
    return best, trace


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--iterations", type=int, default=2000)
    p.add_argument("--T", type=int, default=8)
    p.add_argument("--n", type=int, default=6)
    p.add_argument("--repeats", type=int, default=3)
    args = p.parse_args()

    gt = simulate(SimConfig(n=args.n, T=args.T, lambda_true=0.9, seed=1))
    cfg = SamplerConfig(iterations=args.iterations, burn_in=args.iterations // 6, seed=1)
    updates = args.iterations * args.T

    rows = []
    py_time, py_trace = bench("python", cfg, gt.noisy_data, 1)
    rows.append(("python", py_time))
    if COMPILED_AVAILABLE:
        c_time, c_trace = bench("compiled", cfg, gt.noisy_data, args.repeats)
        rows.append(("compiled", c_time))
        same = (np.array_equal(py_trace.lambdas, c_trace.lambdas)
                and np.array_equal(py_trace.edge_sums, c_trace.edge_sums))
    print(f"n={args.n} T={args.T} m={gt.noisy_data[0].m} iterations={args.iterations}")
    for name, secs in rows:
        print(f"{name:>9}: {secs:8.3f} s  {1e6 * secs / updates:8.2f} us/state update")
    if COMPILED_AVAILABLE:
        print(f"  speedup: {py_time / c_time:.1f}x   identical traces: {same}")
    else:
        print("compiled kernel not built")


if __name__ == "__main__":
    main()
