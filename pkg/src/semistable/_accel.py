"""Numba switch.

Kernels are written in the numba-compatible subset of Python. When numba is
importable and ``SEMISTABLE_DISABLE_NUMBA`` is unset (or "0"), they are
compiled with ``numba.njit``; otherwise the plain Python/numpy source runs.
"""

import os

_flag = os.environ.get("SEMISTABLE_DISABLE_NUMBA", "0").strip().lower()
_disabled = _flag not in ("", "0", "false", "no")

try:
    if _disabled:
        raise ImportError
    import numba

    USE_NUMBA = True
except ImportError:  # pragma: no cover - depends on environment
    numba = None
    USE_NUMBA = False


def jit(func):
    """Compile ``func`` with numba when enabled, else return it unchanged.

    The uncompiled source is always reachable as ``func.py_func`` so tests and
    benchmarks can compare both paths inside one process.
    """
    if USE_NUMBA:
        return numba.njit(cache=True, fastmath=False)(func)
    func.py_func = func
    return func


def backend():
    return "numba" if USE_NUMBA else "python"
