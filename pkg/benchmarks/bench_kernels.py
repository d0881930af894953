#!/usr/bin/env python3
"""Compare the compiled and pure-Python Jacobi eigen kernels.

Times ``jacobi_eigh`` on random symmetric matrices of the sizes that occur in
practice (2x2 EFIMs up to the 128x128 real embedding of a 64-antenna
covariance) and checks that both backends agree with LAPACK.

    python3 benchmarks/bench_kernels.py [--sizes 2 8 32 128] [--repeat 3]
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from rrbeam import _kernels_py

try:
    from rrbeam import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None


def _time(fn, a, repeat: int) -> float:
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(a)
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[2, 8, 16, 32, 64, 128])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    backends = [("python", _kernels_py.jacobi_eigh)]
    if _compiled is not None:
        backends.insert(0, ("compiled", _compiled.jacobi_eigh))
    else:
        print("compiled extension not available; timing the fallback only")

    print(f"{'n':>5} " + " ".join(f"{name + ' [s]':>14}" for name, _ in backends) + f" {'speedup':>9} {'max |dlam|':>11}")
    for n in args.sizes:
        g = rng.standard_normal((n, n))
        a = (g + g.T) / 2.0
        ref = np.linalg.eigvalsh(a)
        times, err = [], 0.0
        for _, fn in backends:
            times.append(_time(fn, a, args.repeat))
            lam = np.sort(np.asarray(fn(a)[0]))
            err = max(err, float(np.max(np.abs(lam - ref))))
        speed = times[-1] / times[0] if len(times) == 2 else float("nan")
        print(f"{n:5d} " + " ".join(f"{t:14.6f}" for t in times) + f" {speed:9.1f} {err:11.2e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
