"""Compiled versus pure-Python unicycle hold kernel, plus the generic RK4 loop.

Usage: python benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import math
import timeit

import numpy as np

from nhflow import _kernels_py, kernels
from nhflow.control import CoefficientVector, ControllerParams, eval_control
from nhflow.integrators import SolverSettings, _rk4_block, integrate_pi_eps
from nhflow.potentials import make_power_potential
from nhflow.system import unicycle, unicycle_scheme

ARGS = (np.zeros(3), 0.0, 0.1, 64, 2.0, 2.0 * math.pi, 2.0, 1)


def generic_block():
    sys, sc = unicycle(), unicycle_scheme()
    a = CoefficientVector.from_vector(ARGS[4:7], sc)
    p = ControllerParams(1.0, 0.1)
    return _rk4_block(lambda y, t: sys.velocity(y, t, eval_control(sys, sc, p, a, t)), ARGS[0], 0.0, 0.1 / 64, 64)


def full_run(use_kernel):
    P = make_power_potential([1.0, -1.0, math.pi])
    return integrate_pi_eps(unicycle(), unicycle_scheme(), P, ControllerParams(1.0, 0.1), np.zeros(3), 0.0,
                            SolverSettings(10.0), use_kernel=use_kernel)


def best(fn, repeat, number):
    return min(timeit.repeat(fn, repeat=repeat, number=number)) / number


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    rows = []
    if kernels.BACKEND == "cython":
        from nhflow import _kernels

        rows.append(("hold kernel, compiled", best(lambda: _kernels.unicycle_hold(*ARGS), args.repeat, 2000)))
    else:
        print("compiled extension not available; showing the fallback only")
    rows.append(("hold kernel, pure Python", best(lambda: _kernels_py.unicycle_hold(*ARGS), args.repeat, 200)))
    rows.append(("hold block, generic loop", best(generic_block, args.repeat, 20)))
    rows.append((f"10 s run, fast path ({kernels.BACKEND})", best(lambda: full_run(True), args.repeat, 1)))
    rows.append(("10 s run, generic loop", best(lambda: full_run(False), args.repeat, 1)))

    width = max(len(r[0]) for r in rows)
    ref = rows[0][1]
    for name, sec in rows:
        print(f"{name:<{width}}  {sec * 1e6:12.1f} us  x{sec / ref:8.1f}")


if __name__ == "__main__":
    main()
