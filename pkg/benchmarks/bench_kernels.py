"""Compare the numba kernels with the numpy/LAPACK reference backend.

Run from the repository root::

    python benchmarks/bench_kernels.py
    python benchmarks/bench_kernels.py --sizes 200 2000 --repeat 20

Kernel timings use both backends in-process. The end-to-end timing runs a
closed-loop simulation in two subprocesses, one with ``BFSTAB_DISABLE_NUMBA=1``.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from bfstab._compat import HAS_NUMBA
from bfstab._kernels import TridiagonalLU, smallest_eigenvalues

E2E = """
import time
from bfstab import examples, build_gains
from bfstab.closedloop import simulate
t0 = time.perf_counter()
p = examples.heat_rod(30.0, {n}, rho=40.0)
gs = build_gains(p.basis, p.parameters(margin=5.0))
simulate(p.plant(gs), examples.initial_field(p), 0.2, 1e-4, 100)
print(time.perf_counter() - t0)
"""


def _problem(n, rng):
    sub, sup = rng.standard_normal(n - 1), rng.standard_normal(n - 1)
    diag = 4.0 + rng.random(n)
    return sub, diag, sup, rng.standard_normal(n)


def _ms(fn, args, kw, number, then=None):
    """Mean wall time in ms of ``fn(*args, **kw)`` (optionally followed by a method call)."""

    def call():
        out = fn(*args, **kw)
        if then is not None:
            getattr(out, then[0])(then[1])

    return 1e3 * timeit.timeit(call, number=number) / number


def bench_kernels(sizes, repeat):
    rng = np.random.default_rng(0)
    backends = ["numpy"] + (["numba"] if HAS_NUMBA else [])
    print(f"{'kernel':<22}{'n':>7}" + "".join(f"{b + ' [ms]':>14}" for b in backends))
    for n in sizes:
        sub, diag, sup, b = _problem(n, rng)
        d, e = diag, 0.5 * (sub + sup)
        rows = {"tridiagonal factor+solve": [], "bisection (8 smallest)": []}
        for be in backends:
            # warm up (compiles the numba kernels once)
            TridiagonalLU(sub, diag, sup, backend=be).solve(b)
            smallest_eigenvalues(d, e, 8, backend=be)
            rows["tridiagonal factor+solve"].append(
                _ms(TridiagonalLU, (sub, diag, sup), {"backend": be}, repeat, then=("solve", b))
            )
            rows["bisection (8 smallest)"].append(
                _ms(smallest_eigenvalues, (d, e, 8), {"backend": be}, max(1, repeat // 10))
            )
        for name, vals in rows.items():
            print(f"{name:<22}{n:>7}" + "".join(f"{v:>14.3f}" for v in vals))


def bench_end_to_end(n):
    print(f"\nclosed-loop heated rod, n={n}, 2000 steps (includes import and JIT warm-up)")
    for flag in ("1", "0"):
        env = dict(os.environ, BFSTAB_DISABLE_NUMBA=flag)
        out = subprocess.run([sys.executable, "-c", E2E.format(n=n)], env=env, capture_output=True, text=True, check=True)
        label = "numpy" if flag == "1" else ("numba" if HAS_NUMBA else "numpy")
        print(f"  {label:<6} {float(out.stdout):8.3f} s")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[200, 2000, 20000])
    ap.add_argument("--repeat", type=int, default=50)
    ap.add_argument("--e2e-n", type=int, default=400)
    args = ap.parse_args(argv)
    bench_kernels(args.sizes, args.repeat)
    bench_end_to_end(args.e2e_n)


if __name__ == "__main__":
    main()
