"""Hot numeric loops.

Everything here takes and returns plain floats/ndarrays so that it compiles
under ``numba.njit``. The wrappers at the bottom pick a vectorized numpy
implementation where one exists and the backend is pure Python.
"""

import math

import numpy as np

from ._accel import USE_NUMBA, jit

# nonlinearity kinds understood by the integrator
F_EXP = 0
F_POWER = 1
F_TABLE = 2

STATUS_OK = 0
STATUS_CROSSED = 1
STATUS_BLOWUP = 2


@jit
def eval_f(kind, p, scale, ts, tf, tfp, u):
    """f(u / scale) for the builtin kinds; cubic Hermite for tables."""
    x = u / scale
    if kind == 0:
        return math.exp(x)
    if kind == 1:
        b = 1.0 + x
        if b < 0.0:
            return math.nan
        return b ** p
    n = ts.shape[0]
    if x <= ts[0]:
        return tf[0] + tfp[0] * (x - ts[0])
    if x >= ts[n - 1]:
        return tf[n - 1] + tfp[n - 1] * (x - ts[n - 1])
    lo = 0
    hi = n - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ts[mid] <= x:
            lo = mid
        else:
            hi = mid
    h = ts[hi] - ts[lo]
    t = (x - ts[lo]) / h
    t2 = t * t
    t3 = t2 * t
    h00 = 2.0 * t3 - 3.0 * t2 + 1.0
    h10 = t3 - 2.0 * t2 + t
    h01 = -2.0 * t3 + 3.0 * t2
    h11 = t3 - t2
    return h00 * tf[lo] + h10 * h * tfp[lo] + h01 * tf[hi] + h11 * h * tfp[hi]


@jit
def _rhs(s, u, w, lam, ndim, kind, p, scale, ts, tf, tfp):
    # u' = w, w' = -(N-2) w - lam e^{2s} f(u), with w = r u_r and s = log r
    fu = eval_f(kind, p, scale, ts, tf, tfp, u)
    return w, -(ndim - 2.0) * w - lam * math.exp(2.0 * s) * fu


@jit
def integrate_radial(s_start, u0, w0, s_nodes, lam, ndim, kind, p, scale,
                     ts, tf, tfp, max_h, ceiling, stop_at_zero):
    """RK4 in s = log r from ``s_start`` through every node of ``s_nodes``.

    Returns (u, w, status, last) where ``last`` is the index of the last node
    reached. Nodes past an abort are NaN.
    """
    n = s_nodes.shape[0]
    u_out = np.full(n, np.nan)
    w_out = np.full(n, np.nan)
    s = s_start
    u = u0
    w = w0
    for i in range(n):
        target = s_nodes[i]
        span = target - s
        if span > 0.0:
            m = int(math.ceil(span / max_h))
            h = span / m
            for _ in range(m):
                k1u, k1w = _rhs(s, u, w, lam, ndim, kind, p, scale, ts, tf, tfp)
                k2u, k2w = _rhs(s + 0.5 * h, u + 0.5 * h * k1u, w + 0.5 * h * k1w,
                                lam, ndim, kind, p, scale, ts, tf, tfp)
                k3u, k3w = _rhs(s + 0.5 * h, u + 0.5 * h * k2u, w + 0.5 * h * k2w,
                                lam, ndim, kind, p, scale, ts, tf, tfp)
                k4u, k4w = _rhs(s + h, u + h * k3u, w + h * k3w,
                                lam, ndim, kind, p, scale, ts, tf, tfp)
                u += h * (k1u + 2.0 * k2u + 2.0 * k3u + k4u) / 6.0
                w += h * (k1w + 2.0 * k2w + 2.0 * k3w + k4w) / 6.0
                s += h
                if not (math.isfinite(u) and math.isfinite(w)) or abs(u) > ceiling:
                    return u_out, w_out, STATUS_BLOWUP, i - 1
            s = target
        u_out[i] = u
        w_out[i] = w
        if stop_at_zero and u < 0.0:
            return u_out, w_out, STATUS_CROSSED, i
    return u_out, w_out, STATUS_OK, n - 1


@jit
def sturm_count(d, e, x):
    """Number of eigenvalues of the symmetric tridiagonal (d, e) below x."""
    n = d.shape[0]
    count = 0
    q = d[0] - x
    if q < 0.0:
        count += 1
    tiny = 1e-300
    for i in range(1, n):
        if q == 0.0:
            q = tiny
        q = d[i] - x - e[i - 1] * e[i - 1] / q
        if q < 0.0:
            count += 1
    return count


@jit
def gershgorin(d, e):
    n = d.shape[0]
    lo = math.inf
    hi = -math.inf
    for i in range(n):
        rad = 0.0
        if i > 0:
            rad += abs(e[i - 1])
        if i < n - 1:
            rad += abs(e[i])
        lo = min(lo, d[i] - rad)
        hi = max(hi, d[i] + rad)
    return lo, hi


@jit
def smallest_eigenvalue_bisect(d, e, rtol, atol, max_iter):
    lo, hi = gershgorin(d, e)
    for _ in range(max_iter):
        if hi - lo <= max(atol, rtol * max(abs(lo), abs(hi))):
            break
        mid = 0.5 * (lo + hi)
        if sturm_count(d, e, mid) >= 1:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


@jit
def tridiag_solve(d, e, rhs):
    """Thomas algorithm for the symmetric tridiagonal system (d, e) x = rhs."""
    n = d.shape[0]
    c = np.empty(n)
    x = np.empty(n)
    piv = d[0]
    if piv == 0.0:
        piv = 1e-300
    c[0] = e[0] / piv if n > 1 else 0.0
    x[0] = rhs[0] / piv
    for i in range(1, n):
        piv = d[i] - e[i - 1] * c[i - 1]
        if piv == 0.0:
            piv = 1e-300
        if i < n - 1:
            c[i] = e[i] / piv
        x[i] = (rhs[i] - e[i - 1] * x[i - 1]) / piv
    for i in range(n - 2, -1, -1):
        x[i] -= c[i] * x[i + 1]
    return x


@jit
def inverse_iteration(d, e, shift, iters):
    n = d.shape[0]
    ds = d - shift
    v = np.ones(n) / math.sqrt(n)
    for _ in range(iters):
        v = tridiag_solve(ds, e, v)
        nrm = math.sqrt(np.sum(v * v))
        if not math.isfinite(nrm) or nrm == 0.0:
            break
        v = v / nrm
    return v


@jit
def fd_weights(z, x, m):
    """Fornberg weights: c[j, k] is the weight of x[j] for the k-th derivative at z."""
    n = x.shape[0]
    c = np.zeros((n, m + 1))
    c1 = 1.0
    c4 = x[0] - z
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, m)
        c2 = 1.0
        c5 = c4
        c4 = x[i] - z
        for j in range(i):
            c3 = x[i] - x[j]
            c2 = c2 * c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c


@jit
def fd_derivative(x, y, k, npts):
    """k-th derivative of samples y(x) with an npts-point stencil per node."""
    n = x.shape[0]
    out = np.empty(n)
    half = npts // 2
    for i in range(n):
        start = i - half
        if start < 0:
            start = 0
        if start + npts > n:
            start = n - npts
        xs = x[start:start + npts]
        # shift to the evaluation point for conditioning
        w = fd_weights(x[i], xs, k)
        acc = 0.0
        for j in range(npts):
            acc += w[j, k] * y[start + j]
        out[i] = acc
    return out


@jit
def _cumtrapz_loop(x, f):
    n = x.shape[0]
    out = np.zeros(n)
    for i in range(1, n):
        out[i] = out[i - 1] + 0.5 * (x[i] - x[i - 1]) * (f[i] + f[i - 1])
    return out


@jit
def _cumhermite_loop(x, f, df):
    n = x.shape[0]
    out = np.zeros(n)
    for i in range(1, n):
        h = x[i] - x[i - 1]
        out[i] = out[i - 1] + 0.5 * h * (f[i] + f[i - 1]) + h * h * (df[i - 1] - df[i]) / 12.0
    return out


def _cumtrapz_np(x, f):
    h = np.diff(x)
    return np.concatenate(([0.0], np.cumsum(0.5 * h * (f[1:] + f[:-1]))))


def _cumhermite_np(x, f, df):
    h = np.diff(x)
    inc = 0.5 * h * (f[1:] + f[:-1]) + h * h * (df[:-1] - df[1:]) / 12.0
    return np.concatenate(([0.0], np.cumsum(inc)))


def cumtrapz(x, f):
    """Cumulative trapezoid, starting at 0 on x[0]."""
    x = np.ascontiguousarray(x, dtype=float)
    f = np.ascontiguousarray(f, dtype=float)
    if USE_NUMBA:
        return _cumtrapz_loop(x, f)
    return _cumtrapz_np(x, f)


def cumhermite(x, f, df):
    """Cumulative trapezoid with the Euler-Maclaurin end correction (order 4)."""
    x = np.ascontiguousarray(x, dtype=float)
    f = np.ascontiguousarray(f, dtype=float)
    df = np.ascontiguousarray(df, dtype=float)
    if USE_NUMBA:
        return _cumhermite_loop(x, f, df)
    return _cumhermite_np(x, f, df)
