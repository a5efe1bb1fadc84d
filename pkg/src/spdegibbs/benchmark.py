"""Throughput comparison of the compiled and pure-numpy ensemble kernels.

    python -m spdegibbs.benchmark [--samples N] [--steps N] [--modes K] ...

Runs the same workload (same seed, same counters) through both backends,
reports wall time and steps/second, and checks the two means agree.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from . import backend
from .model import get_nonlinearity
from .schemes import make_scheme
from .spectral import make_space


def _run(space, nl, scheme, samples, steps, seed, which, threads):
    t0 = time.perf_counter()
    phi, div = backend.ensemble_phi(
        space, nl, scheme, "expnorm", samples, seed, 0, steps,
        n_threads=threads, backend=which,
    )
    elapsed = time.perf_counter() - t0
    return float(np.nanmean(phi)), int(div.sum()), elapsed


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--samples", type=int, default=20000)
    parser.add_argument("--steps", type=int, default=80)
    parser.add_argument("--modes", type=int, default=9)
    parser.add_argument("--scheme", default="lm")
    parser.add_argument("--dt", type=float, default=0.125)
    parser.add_argument("--theta", type=float, default=None)
    parser.add_argument("--alpha", type=float, default=None)
    parser.add_argument("--nonlinearity", default="cos")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--threads", type=int, default=1)
    args = parser.parse_args(argv)

    space = make_space("fd", modes=args.modes)
    nl = get_nonlinearity(args.nonlinearity)
    scheme = make_scheme(args.scheme, args.dt, theta=args.theta, alpha=args.alpha)
    work = args.samples * args.steps

    rows = []
    backends = ["python"]
    if backend.compiled_available():
        backends.insert(0, "compiled")
    else:
        print("compiled kernel not built; benchmarking the python kernel alone")
    for which in backends:
        mean, ndiv, elapsed = _run(
            space, nl, scheme, args.samples, args.steps, args.seed, which, args.threads
        )
        rows.append((which, mean, ndiv, elapsed, work / elapsed))

    print(
        f"\nworkload: {args.samples} trajectories x {args.steps} steps, "
        f"K={args.modes}, scheme={args.scheme}, f={args.nonlinearity}, "
        f"threads={args.threads}"
    )
    print(f"{'backend':<10} {'mean':<20} {'diverged':<9} {'seconds':<9} steps/s")
    for which, mean, ndiv, elapsed, rate in rows:
        print(f"{which:<10} {mean:<20.12f} {ndiv:<9} {elapsed:<9.3f} {rate:,.0f}")
    if len(rows) == 2:
        speedup = rows[1][3] / rows[0][3]
        gap = abs(rows[0][1] - rows[1][1])
        print(f"\nspeedup (compiled over python): {speedup:.1f}x; |mean gap| = {gap:.3e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
