"""Compare the compiled and numpy paths of the hot kernels.

    python benchmarks/bench_kernels.py [--repeat 5] [--n 33]

The numpy path is selected by TRANSHOCK_NO_NUMBA, which the kernels read on
every call, so both paths run in the same process.  The first compiled call
is timed separately (it includes compilation).
"""
import argparse
import math
import os
import time

import numpy as np

from transhock import _kernels as K


def _time(fn, repeat):
    best = math.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def rk4_case(nsteps):
    h = 1.0 / nsteps
    f = np.full(2 * nsteps + 1, 0.1)
    return lambda: K.rk4_branch(2.0, 2.0, 2.0, h, f, 1e-6)


def trace_case(n):
    n1 = 2 * n - 1
    y = np.linspace(-1.0, 1.0, n)
    t = np.linspace(0.0, 1.0, n1)[:, None, None]
    Y2, Y3 = np.meshgrid(y, y, indexing="ij")
    I2 = 0.1 * t * np.sin(math.pi * Y2)[None] * np.cos(0.5 * math.pi * Y3)[None]
    I3 = 0.1 * t * np.cos(0.5 * math.pi * Y2)[None] * np.sin(math.pi * Y3)[None]
    h = y[1] - y[0]
    return lambda: K.trace_backward(I2, I3, 0.5 / (n1 - 1), h, h)


def run(name, make, repeat):
    fn = make()
    os.environ["TRANSHOCK_NO_NUMBA"] = "1"
    t_py, out_py = _time(fn, repeat)
    os.environ["TRANSHOCK_NO_NUMBA"] = "0"
    t0 = time.perf_counter()
    fn()
    t_first = time.perf_counter() - t0
    t_nb, out_nb = _time(fn, repeat)
    diff = float(np.max(np.abs(np.asarray(out_py[0]) - np.asarray(out_nb[0]))))
    print(f"{name:<28s} numpy {t_py * 1e3:9.2f} ms   numba {t_nb * 1e3:9.3f} ms   "
          f"(first call {t_first:6.2f} s)   speedup {t_py / t_nb:7.1f}x   max diff {diff:.1e}")


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--n", type=int, default=33, help="cross-section nodes for the trajectory case")
    args = p.parse_args()
    if not K.HAVE_NUMBA:
        print("numba is not installed; only the numpy path is available")
        return
    run("rk4_branch (20000 steps)", lambda: rk4_case(20000), args.repeat)
    run(f"trace_backward ({2 * args.n - 1}x{args.n}x{args.n})", lambda: trace_case(args.n), args.repeat)


if __name__ == "__main__":
    main()
