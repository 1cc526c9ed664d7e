#!/usr/bin/env python3
"""Time the numba kernels against their pure-numpy fallbacks.

Run from the repository root:

    python benchmarks/bench_kernels.py [--repeats 5]

Each kernel is timed over a fixed inner-loop workload; the table reports the
best-of-N wall time per call and the numba speedup. Setting
QMETRO_DISABLE_NUMBA=1 would hide the numba column entirely, so the script
refuses to run under that flag.
"""

import argparse
import time

import numpy as np

from qmetro import bell_povm, reference_states, simulate_counts
from qmetro import kernels


def best_of(repeats, fn, *args):
    best = float("inf")
    result = None
    for _ in range(repeats):
        start = time.perf_counter()
        result = fn(*args)
        best = min(best, time.perf_counter() - start)
    return best, result


def workloads():
    rng = np.random.default_rng(0)
    povm = np.ascontiguousarray(bell_povm().elements)
    g = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    rho = g @ g.conj().T
    rho = np.ascontiguousarray(rho / np.trace(rho).real)
    drhos = rng.standard_normal((2, 4, 4)) + 1j * rng.standard_normal((2, 4, 4))
    drhos = np.ascontiguousarray(drhos + drhos.conj().transpose(0, 2, 1))
    p = rng.uniform(0.05, 1.0, 8)
    p /= p.sum()
    dp = rng.standard_normal((2, 8))
    dp -= dp.mean(axis=1, keepdims=True)

    refs = reference_states()
    counts = simulate_counts(bell_povm(), refs, 1e5, seed=3)
    init = np.ascontiguousarray(np.stack([np.eye(4, dtype=complex) / 4] * 4))

    def loop(fn, n, *args):
        def run():
            out = None
            for _ in range(n):
                out = fn(*args)
            return out
        return run

    return [
        ("povm_probabilities x20000",
         lambda impl: loop(impl, 20000, rho, povm)),
        ("povm_probability_derivs x20000",
         lambda impl: loop(impl, 20000, drhos, povm)),
        ("fisher_matrix x20000",
         lambda impl: loop(impl, 20000, p, dp, 1e-12)),
        ("kappa_phase_dephasing x20000",
         lambda impl: loop(impl, 20000, 0.7, 1.9, 0.45, povm, 0.667, 1.52, 1e-12)),
        ("kappa_two_phase x20000",
         lambda impl: loop(impl, 20000, 0.9, 0.4, 0.3, povm, 1e-5, 1e-12)),
        ("mle_iterate (200 iters)",
         lambda impl: loop(impl, 1, counts.counts, refs.states, init.copy(),
                           200, 1e-14, 1e-12)),
    ]


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    if kernels.NUMBA_IMPLS is None:
        raise SystemExit("numba backend unavailable (is QMETRO_DISABLE_NUMBA "
                         "set?); nothing to compare")

    print(f"active backend: {kernels.BACKEND}")
    print("compiling kernels...")
    kernels.warmup()

    header = f"{'kernel':36s} {'numpy':>12s} {'numba':>12s} {'speedup':>9s}"
    print(header)
    print("-" * len(header))
    for label, make in workloads():
        name = label.split(" ")[0]
        t_np, _ = best_of(args.repeats, make(kernels.NUMPY_IMPLS[name]))
        t_nb, _ = best_of(args.repeats, make(kernels.NUMBA_IMPLS[name]))
        print(f"{label:36s} {t_np * 1e3:10.2f}ms {t_nb * 1e3:10.2f}ms "
              f"{t_np / t_nb:8.1f}x")


if __name__ == "__main__":
    main()
