"""Compare the compiled kernels with their plain Python/numpy fallbacks.

Two measurements:

* in process, each jitted kernel against its ``py_func`` (same inputs, same results);
* end to end, one branch point solved in a child process with and without
  ``SEMISTABLE_DISABLE_NUMBA``, which is how the fallback is selected in practice.

Usage: python3 benchmarks/bench_kernels.py [--repeat 3] [--json out.json]
"""

import argparse
import json
import math
import os
import subprocess
import sys
import time

import numpy as np

from semistable import kernels
from semistable.core import Nonlinearity, RadialGrid


def best_of(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def cases():
    grid = RadialGrid.geometric(2000, 1e-6)
    s_nodes = np.log(grid.nodes)
    kind, p, scale, ts, tf, tfp = Nonlinearity.exp().kernel_args()
    shoot_args = (math.log(1e-6), 5.0, 0.0, s_nodes, 10.0, 10.0, kind, p, scale, ts, tf, tfp,
                  2e-3, 1e8, False)

    n = 4000
    r = np.geomspace(1e-6, 1.0, n)
    d = 2.0 + 1.0 / r[:-1] ** 0.5
    e = -np.ones(n - 2)

    x = np.geomspace(1e-3, 1.0, 5000)
    y = np.sin(1.0 / x)
    dy = -np.cos(1.0 / x) / x**2

    return {
        "integrate_radial": (kernels.integrate_radial, shoot_args),
        "smallest_eigenvalue_bisect": (kernels.smallest_eigenvalue_bisect, (d, e, 1e-14, 1e-300, 400)),
        "inverse_iteration": (kernels.inverse_iteration, (d, e, 0.5, 4)),
        "fd_derivative": (kernels.fd_derivative, (x, y, 1, 5)),
        "cumhermite": (kernels._cumhermite_loop, (x, y, dy)),
    }


def in_process(repeat):
    rows = []
    for name, (fn, args) in cases().items():
        py = getattr(fn, "py_func", fn)
        if kernels.USE_NUMBA:
            fn(*args)  # compile outside the timing
        t_fast, out_fast = best_of(lambda: fn(*args), repeat)
        t_py, out_py = best_of(lambda: py(*args), max(1, repeat // 2))
        first = lambda o: o[0] if isinstance(o, tuple) else o
        a, b = np.asarray(first(out_fast), dtype=float), np.asarray(first(out_py), dtype=float)
        agree = float(np.max(np.abs(a - b) / np.maximum(np.abs(b), 1e-300))) if a.size else 0.0
        rows.append({"kernel": name, "compiled_s": t_fast, "python_s": t_py,
                     "speedup": t_py / t_fast if t_fast > 0 else math.inf, "max_rel_diff": agree})
    return rows


_CHILD = """
import time
from semistable import kernels
from semistable.branch import solve_lambda
from semistable.core import Nonlinearity, RadialGrid
g = RadialGrid.geometric(2000, 1e-6)
f = Nonlinearity.exp()
solve_lambda(f, 10, 1.0, g)  # warm up (compiles when enabled)
t = time.perf_counter()
lam = solve_lambda(f, 10, 5.0, g)
print(kernels.USE_NUMBA, time.perf_counter() - t, repr(lam))
"""


def end_to_end():
    out = {}
    for label, flag in (("numba", "0"), ("python", "1")):
        env = dict(os.environ, SEMISTABLE_DISABLE_NUMBA=flag)
        res = subprocess.run([sys.executable, "-c", _CHILD], env=env, capture_output=True,
                             text=True, check=True)
        used, secs, lam = res.stdout.split()
        out[label] = {"backend_active": used == "True", "seconds": float(secs), "lambda": float(lam)}
    return out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--json", default=None)
    ap.add_argument("--skip-end-to-end", action="store_true")
    args = ap.parse_args(argv)

    rows = in_process(args.repeat)
    print(f"backend: {'numba' if kernels.USE_NUMBA else 'python (numba disabled or missing)'}")
    print(f"{'kernel':30s} {'compiled [s]':>13s} {'python [s]':>11s} {'speedup':>9s} {'rel diff':>9s}")
    for r in rows:
        print(f"{r['kernel']:30s} {r['compiled_s']:13.2e} {r['python_s']:11.2e} "
              f"{r['speedup']:9.1f} {r['max_rel_diff']:9.1e}")
    result = {"kernels": rows}
    if not args.skip_end_to_end:
        e2e = end_to_end()
        result["end_to_end"] = e2e
        fast, slow = e2e["numba"]["seconds"], e2e["python"]["seconds"]
        print(f"solve_lambda (N=10, exp, a=5): numba {fast:.3f} s, python {slow:.3f} s, "
              f"speedup {slow / fast:.1f}x, lambda agree {e2e['numba']['lambda'] == e2e['python']['lambda']}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(result, fh, indent=2, sort_keys=True)
    return result


if __name__ == "__main__":
    main()
