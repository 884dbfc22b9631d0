"""Time the numba and numpy kernel backends on the same inputs.

    python bench/bench_kernels.py [--n 100000] [--repeat 3]

Compilation happens in a warm-up call and is reported separately. Outputs of
the two backends are compared so a speedup never hides a discrepancy.
"""
import argparse
import time

import numpy as np

from glnar import kernels
from glnar._accel import HAVE_NUMBA
from glnar.gln import ThetaState
from glnar.simulate import SimSpec, simulate


def _best(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def cases(n):
    x = simulate(SimSpec(ThetaState([1.36, -0.37], 0.11, 1.4), n, seed=7)).series.values
    xc = np.clip(x, 0.005, 0.995)
    ok = np.ones(n, dtype=bool)
    ok[0] = False
    z = np.random.default_rng(0).standard_normal(n)

    def ar(impl):
        return lambda: impl(np.array([1.36, -0.37]), 0.33, z, np.zeros(2))

    def glnar(impl):
        def run():
            theta = np.array([0.0, 0.0, 1.0, 1.0])
            return impl(xc, ok, 0.999, 102, theta, np.zeros((4, 4)), np.zeros(2),
                        np.zeros(3, dtype=np.int64), np.zeros(1), True)[0]
        return run

    def rls(impl):
        def run():
            return impl(x, ok, 0.995, 102, np.zeros(2), np.zeros((2, 2)), np.zeros(2), np.zeros(2),
                        np.zeros(3, dtype=np.int64))[0]
        return run

    return {"ar_filter": ar, "glnar_recursion": glnar, "rls_recursion": rls}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=100_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if not HAVE_NUMBA:
        print("numba is not installed; only the numpy backend can run")

    print(f"n = {args.n}")
    print(f"{'kernel':<18}{'numpy s':>10}{'numba s':>10}{'compile s':>11}{'speedup':>9}{'max |diff|':>12}")
    for name, make in cases(args.n).items():
        t_np, out_np = _best(make(kernels.get(name, "numpy")), args.repeat)
        if not HAVE_NUMBA:
            print(f"{name:<18}{t_np:>10.3f}")
            continue
        fn = make(kernels.get(name, "numba"))
        t0 = time.perf_counter()
        fn()
        t_first = time.perf_counter() - t0
        t_nb, out_nb = _best(fn, args.repeat)
        diff = float(np.nanmax(np.abs(out_np - out_nb)))
        print(f"{name:<18}{t_np:>10.3f}{t_nb:>10.4f}{max(t_first - t_nb, 0):>11.2f}"
              f"{t_np / t_nb:>9.0f}x{diff:>12.2e}")


if __name__ == "__main__":
    main()
