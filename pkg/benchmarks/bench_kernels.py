"""Time the numba kernels against their pure-numpy twins.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]

Each case runs once per backend to warm up (numba compilation, caches),
then ``--repeat`` timed runs; the table reports the best time and checks
that both backends give the same answer.
"""
import argparse
import time

import numpy as np

from curbflow import _accel, bundled, simulate
from curbflow.laxhopf import Grid
from curbflow.problem import evaluate


def _cases():
    scn = bundled("ride_hailing")
    surface = simulate(scn).conditions
    g = Grid(scn.L, scn.T, dt=2.0, dx=5.0)
    tt, xx = np.meshgrid(g.t, g.x, indexing="ij")
    X = np.array(scn.positions())
    return {
        "envelope (pruned)": lambda: surface.evaluate(tt, xx, prune=True),
        "envelope (brute)": lambda: surface.evaluate(tt, xx, prune=False),
        "hybrid simulate": lambda: simulate(scn).surface().M,
        "objective evaluate": lambda: np.array([evaluate(X, scn).f]),
    }


def _best(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    cases = _cases()
    prev = _accel.backend_name()
    rows = []
    try:
        for name, fn in cases.items():
            res = {}
            for backend in ("numpy", "numba"):
                _accel.set_backend(backend)
                fn()
                res[backend] = _best(fn, args.repeat)
            diff = float(np.max(np.abs(np.asarray(res["numpy"][1]) - np.asarray(res["numba"][1]))))
            rows.append((name, res["numpy"][0], res["numba"][0], diff))
    finally:
        _accel.set_backend(prev)
    print(f"{'case':<20} {'numpy s':>10} {'numba s':>10} {'speed-up':>9} {'max diff':>10}")
    for name, tp, tn, diff in rows:
        print(f"{name:<20} {tp:>10.4f} {tn:>10.4f} {tp / tn:>8.1f}x {diff:>10.1e}")


if __name__ == "__main__":
    main()
