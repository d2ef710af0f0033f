"""Radial grids, profiles, nonlinearities and the weighted integrals on them."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import CubicHermiteSpline, CubicSpline, PchipInterpolator
from scipy.special import gamma as gamma_fn

from . import kernels


class SemistableError(Exception):
    """Base class for errors raised by this package."""


class InputError(SemistableError, ValueError):
    """Rejected input: non-finite samples, bad grids, missing data."""


class HypothesisError(SemistableError):
    """A theorem hypothesis required by an operation does not hold."""


class ConstructionError(SemistableError):
    """An internal construction produced an object violating its invariants."""


# --------------------------------------------------------------------------
# dimension-dependent constants


def check_dimension(n: int) -> int:
    if int(n) != n or n < 2:
        raise InputError(f"dimension must be an integer >= 2, got {n!r}")
    return int(n)


def regime(n: int) -> str:
    n = check_dimension(n)
    if n < 10:
        return "N<10"
    if n == 10:
        return "N=10"
    return "N>10"


def sphere_area(n: int) -> float:
    """Surface measure of the unit sphere in R^n."""
    n = check_dimension(n)
    return 2.0 * math.pi ** (n / 2.0) / gamma_fn(n / 2.0)


def growth_exponent(n: int) -> float:
    """-N/2 + sqrt(N-1) + 2; the power of r in the sharp bound on |u|."""
    return -n / 2.0 + math.sqrt(n - 1.0) + 2.0


def energy_exponent(n: int) -> float:
    """2 sqrt(N-1) + 2; the power of r in the weighted energy bound."""
    return 2.0 * math.sqrt(n - 1.0) + 2.0


def jl_exponent(n: int) -> float:
    """Joseph-Lundgren exponent (N - 2 sqrt(N-1)) / (N - 2 sqrt(N-1) - 4), N > 10."""
    if n <= 10:
        raise InputError("the Joseph-Lundgren exponent is defined for N > 10")
    t = n - 2.0 * math.sqrt(n - 1.0)
    return t / (t - 4.0)


# --------------------------------------------------------------------------
# grids


@dataclass(frozen=True, eq=False)
class RadialGrid:
    """Strictly increasing radii in (0, 1] ending at 1."""

    nodes: np.ndarray
    grading: str = "geometric"

    def __post_init__(self):
        r = np.ascontiguousarray(self.nodes, dtype=float)
        if r.ndim != 1 or r.size < 3:
            raise InputError("a grid needs at least three nodes")
        if not np.all(np.isfinite(r)) or r[0] <= 0.0:
            raise InputError("grid nodes must be finite and positive")
        if np.any(np.diff(r) <= 0.0):
            raise InputError("grid nodes must be strictly increasing")
        if r[-1] != 1.0:
            raise InputError("the last grid node must equal 1")
        r.setflags(write=False)
        object.__setattr__(self, "nodes", r)

    @property
    def r_min(self) -> float:
        return float(self.nodes[0])

    @property
    def size(self) -> int:
        return int(self.nodes.size)

    def __len__(self):
        return self.size

    @classmethod
    def geometric(cls, n: int = 2000, r_min: float = 1e-6) -> "RadialGrid":
        """Geometric nodes on [r_min, 1] with r = 1/2 always a node."""
        if not 0.0 < r_min < 0.5:
            raise InputError("r_min must lie in (0, 1/2)")
        if n < 5:
            raise InputError("need at least 5 nodes")
        total = math.log(1.0 / r_min)
        n_outer = max(2, int(round((n - 1) * math.log(2.0) / total)))
        n_inner = n - n_outer
        inner = np.geomspace(r_min, 0.5, n_inner)
        outer = np.geomspace(0.5, 1.0, n_outer + 1)[1:]
        nodes = np.concatenate((inner, outer))
        nodes[-1] = 1.0
        return cls(nodes, "geometric")

    @classmethod
    def uniform(cls, n: int = 2000, r_min: float = 1e-3) -> "RadialGrid":
        nodes = np.linspace(r_min, 1.0, n)
        nodes[-1] = 1.0
        return cls(nodes, "uniform")

    def refined(self, centers, widths, per_interval: int = 32) -> "RadialGrid":
        """Union with uniform nodes covering [c - w, c + w] for each pair."""
        extra = []
        for c, w in zip(np.atleast_1d(centers), np.atleast_1d(widths)):
            lo = max(c - w, self.r_min)
            hi = min(c + w, 1.0)
            if hi > lo:
                extra.append(np.linspace(lo, hi, 2 * per_interval + 1))
            if self.r_min < c <= 1.0:
                extra.append(np.array([c]))
        return self.merged(extra)

    def merged(self, extra) -> "RadialGrid":
        """Union with extra nodes; those outside [r_min, 1] are ignored."""
        pieces = [self.nodes] + [np.asarray(e, dtype=float).ravel() for e in extra]
        r = np.unique(np.concatenate(pieces))
        r = r[(r >= self.r_min) & (r <= 1.0)]
        # drop near-duplicates that would wreck finite-difference stencils
        keep = np.concatenate(([True], np.diff(r) > 1e-13 * r[1:]))
        keep[-1] = True
        r = r[keep]
        if r[-2] >= 1.0:
            r = r[:-1]
        r[-1] = 1.0
        grading = self.grading if self.grading.endswith("+refined") else self.grading + "+refined"
        return RadialGrid(r, grading)

    def with_r_min(self, r_min: float) -> "RadialGrid":
        """Same spacing law extended (or truncated) to a new inner radius."""
        if self.grading.startswith("geometric"):
            ratio = self.nodes[1] / self.nodes[0]
            n = int(round(math.log(1.0 / r_min) / math.log(ratio))) + 1
            return RadialGrid.geometric(n, r_min)
        return RadialGrid.uniform(self.size, r_min)


# --------------------------------------------------------------------------
# profiles

_DERIV_NAMES = ("d1", "d2", "d3")


def _as_samples(x, n, name):
    if x is None:
        return None
    a = np.ascontiguousarray(x, dtype=float)
    if a.shape != (n,):
        raise InputError(f"{name} must have {n} samples, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InputError(f"{name} contains non-finite samples")
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class RadialProfile:
    """A radial function u(r) sampled on a grid, with optional u_r, u_rr, u_rrr."""

    grid: RadialGrid
    values: np.ndarray
    dim: int
    d1: Optional[np.ndarray] = None
    d2: Optional[np.ndarray] = None
    d3: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n = self.grid.size
        check_dimension(self.dim)
        object.__setattr__(self, "values", _as_samples(self.values, n, "values"))
        for name in _DERIV_NAMES:
            object.__setattr__(self, name, _as_samples(getattr(self, name), n, name))
        if self.meta.get("decreasing") and self.d1 is not None:
            scale = max(1.0, float(np.max(np.abs(self.d1))))
            if np.any(self.d1 > 1e-9 * scale):
                raise InputError("profile flagged radially decreasing has u_r > 0")

    @property
    def r(self) -> np.ndarray:
        return self.grid.nodes

    @classmethod
    def from_function(cls, grid, dim, u, du=None, d2u=None, d3u=None, **meta):
        r = grid.nodes
        return cls(
            grid,
            u(r),
            dim,
            None if du is None else du(r),
            None if d2u is None else d2u(r),
            None if d3u is None else d3u(r),
            dict(meta),
        )

    def derivative(self, k: int, accuracy: int = 2) -> np.ndarray:
        """Stored k-th derivative samples, else finite differences of u."""
        if k == 0:
            return self.values
        stored = getattr(self, _DERIV_NAMES[k - 1])
        if stored is not None:
            return stored
        return differentiate(self, k, accuracy).values

    def with_derivatives(self, accuracy: int = 4) -> "RadialProfile":
        filled = {n: self.derivative(k + 1, accuracy) for k, n in enumerate(_DERIV_NAMES)}
        return replace(self, **filled)

    def scaled(self, c: float) -> "RadialProfile":
        kw = {n: (None if getattr(self, n) is None else c * getattr(self, n)) for n in _DERIV_NAMES}
        return replace(self, values=c * self.values, **kw)

    def restricted(self, step: int) -> "RadialProfile":
        """Every ``step``-th node (the last node is always kept)."""
        idx = np.arange(0, self.grid.size, step)
        if idx[-1] != self.grid.size - 1:
            idx = np.append(idx, self.grid.size - 1)
        grid = RadialGrid(self.r[idx], self.grid.grading)
        kw = {n: (None if getattr(self, n) is None else getattr(self, n)[idx]) for n in _DERIV_NAMES}
        return RadialProfile(grid, self.values[idx], self.dim, meta=dict(self.meta), **kw)

    def evaluate(self, r, k: int = 0) -> np.ndarray:
        """Interpolate the k-th derivative at arbitrary radii in [r_min, 1]."""
        r = np.asarray(r, dtype=float)
        y = self.derivative(k) if k else self.values
        if k < 3:
            dy = getattr(self, _DERIV_NAMES[k])
            if dy is not None:
                return CubicHermiteSpline(self.r, y, dy)(r)
        return CubicSpline(np.log(self.r), y)(np.log(r))

    # CSV round trip ------------------------------------------------------

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["r", "u", "u_r", "u_rr", "u_rrr"])
        cols = [self.r, self.values] + [getattr(self, n) for n in _DERIV_NAMES]
        for i in range(self.grid.size):
            w.writerow(["" if c is None else repr(float(c[i])) for c in cols])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, dim: int, **meta) -> "RadialProfile":
        rows = list(csv.DictReader(io.StringIO(text)))
        if not rows:
            raise InputError("empty profile CSV")
        missing = {"r", "u"} - set(rows[0])
        if missing:
            raise InputError(f"profile CSV lacks columns {sorted(missing)}")

        def col(name):
            if name not in rows[0] or any(row[name] in ("", None) for row in rows):
                return None
            try:
                return np.array([float(row[name]) for row in rows])
            except ValueError:
                raise InputError(f"profile CSV column {name!r} holds a non-numeric value") from None

        grid = RadialGrid(col("r"))
        return cls(grid, col("u"), dim, col("u_r"), col("u_rr"), col("u_rrr"), dict(meta))


# --------------------------------------------------------------------------
# nonlinearities

_KIND_CODES = {"exp": kernels.F_EXP, "power": kernels.F_POWER, "table": kernels.F_TABLE}
_EMPTY = np.zeros(2)


def _hermite_eval(ts, tf, tfp, x, deriv=0):
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    left = x <= ts[0]
    right = x >= ts[-1]
    mid = ~(left | right)
    if deriv == 0:
        out[left] = tf[0] + tfp[0] * (x[left] - ts[0])
        out[right] = tf[-1] + tfp[-1] * (x[right] - ts[-1])
    else:
        out[left] = tfp[0]
        out[right] = tfp[-1]
    xm = x[mid]
    i = np.clip(np.searchsorted(ts, xm, side="right") - 1, 0, ts.size - 2)
    h = ts[i + 1] - ts[i]
    t = (xm - ts[i]) / h
    if deriv == 0:
        out[mid] = ((2 * t**3 - 3 * t**2 + 1) * tf[i] + (t**3 - 2 * t**2 + t) * h * tfp[i]
                    + (-2 * t**3 + 3 * t**2) * tf[i + 1] + (t**3 - t**2) * h * tfp[i + 1])
    else:
        out[mid] = ((6 * t**2 - 6 * t) * tf[i] / h + (3 * t**2 - 4 * t + 1) * tfp[i]
                    + (-6 * t**2 + 6 * t) * tf[i + 1] / h + (3 * t**2 - 2 * t) * tfp[i + 1])
    return out


@dataclass(frozen=True, eq=False)
class Nonlinearity:
    """f(s / scale) for f in {e^s, (1+s)^p, tabulated}, with declared flags."""

    kind: str
    p: float = 1.0
    scale: float = 1.0
    table_s: Optional[np.ndarray] = None
    table_f: Optional[np.ndarray] = None
    table_fp: Optional[np.ndarray] = None
    flags: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in _KIND_CODES:
            raise InputError(f"unknown nonlinearity kind {self.kind!r}")
        if not self.scale > 0:
            raise InputError("scale must be positive")
        if self.kind == "table":
            s = np.ascontiguousarray(self.table_s, dtype=float)
            f = np.ascontiguousarray(self.table_f, dtype=float)
            if s.size < 2 or f.shape != s.shape or np.any(np.diff(s) <= 0):
                raise InputError("table needs >= 2 rows with strictly increasing s")
            if self.table_fp is None:
                fp = PchipInterpolator(s, f).derivative()(s)
            else:
                fp = np.ascontiguousarray(self.table_fp, dtype=float)
            if not (np.all(np.isfinite(f)) and np.all(np.isfinite(fp))):
                raise InputError("table contains non-finite samples")
            object.__setattr__(self, "table_s", s)
            object.__setattr__(self, "table_f", f)
            object.__setattr__(self, "table_fp", fp)
            if not self.flags:
                object.__setattr__(self, "flags", detect_flags(s, f, fp))

    @classmethod
    def exp(cls):
        return cls("exp", flags=_convex_flags())

    @classmethod
    def power(cls, p: float):
        if not p > 1.0:
            raise InputError("power nonlinearity needs p > 1")
        return cls("power", p=float(p), flags=_convex_flags())

    @classmethod
    def table(cls, s, f, fprime=None, flags=None):
        return cls("table", table_s=s, table_f=f, table_fp=fprime, flags=dict(flags or {}))

    @classmethod
    def from_table_csv(cls, text: str):
        rows = list(csv.DictReader(io.StringIO(text)))
        cols = set(rows[0]) if rows else set()
        fcol, dcol = ("g", "gprime") if "g" in cols and "f" not in cols else ("f", "fprime")
        if not {"s", fcol} <= cols:
            raise InputError("nonlinearity table needs columns s,f[,fprime] or s,g[,gprime]")
        try:
            s = np.array([float(r["s"]) for r in rows])
            f = np.array([float(r[fcol]) for r in rows])
            fp = None
            if dcol in cols and all(r[dcol] not in ("", None) for r in rows):
                fp = np.array([float(r[dcol]) for r in rows])
        except ValueError:
            raise InputError("nonlinearity table holds a non-numeric value") from None
        order = np.argsort(s)
        return cls.table(s[order], f[order], None if fp is None else fp[order])

    def scaled(self, m: float) -> "Nonlinearity":
        """s -> f(s / m); the extremal solution scales by m."""
        return replace(self, scale=self.scale * m)

    # evaluation ----------------------------------------------------------

    def __call__(self, s):
        x = np.asarray(s, dtype=float) / self.scale
        if self.kind == "exp":
            return np.exp(x)
        if self.kind == "power":
            with np.errstate(invalid="ignore"):
                return np.where(x >= -1.0, np.abs(1.0 + x) ** self.p, np.nan)
        return _hermite_eval(self.table_s, self.table_f, self.table_fp, np.atleast_1d(x)).reshape(x.shape)

    def derivative(self, s):
        x = np.asarray(s, dtype=float) / self.scale
        if self.kind == "exp":
            d = np.exp(x)
        elif self.kind == "power":
            with np.errstate(invalid="ignore"):
                d = np.where(x >= -1.0, self.p * np.abs(1.0 + x) ** (self.p - 1.0), np.nan)
        else:
            d = _hermite_eval(self.table_s, self.table_f, self.table_fp,
                              np.atleast_1d(x), deriv=1).reshape(x.shape)
        return d / self.scale

    def kernel_args(self):
        if self.kind == "table":
            ts, tf, tfp = self.table_s, self.table_f, self.table_fp
        else:
            ts = tf = tfp = _EMPTY
        return (_KIND_CODES[self.kind], float(self.p), float(self.scale), ts, tf, tfp)

    def descriptor(self) -> dict:
        d = {"kind": self.kind, "scale": self.scale}
        if self.kind == "power":
            d["p"] = self.p
        if self.kind == "table":
            d["rows"] = int(self.table_s.size)
        return d

    def check_flags(self, samples) -> dict:
        """Opportunistic re-check of the declared flags on sampled values."""
        s = np.unique(np.asarray(samples, dtype=float))
        found = detect_flags(s, self(s), self.derivative(s))
        return {k: v for k, v in found.items() if self.flags.get(k) and not v}


def _convex_flags():
    return {"nonnegative": True, "nondecreasing": True, "convex": True,
            "positive_at_zero": True, "superlinear": True}


def detect_flags(s, f, fp, rtol=1e-9) -> dict:
    """Sign/monotonicity/convexity of tabulated g, g' (nodewise, relative tol)."""
    s = np.asarray(s, dtype=float)
    f = np.asarray(f, dtype=float)
    fp = np.asarray(fp, dtype=float)
    fs = max(float(np.max(np.abs(f))), 1e-300)
    ps = max(float(np.max(np.abs(fp))), 1e-300)
    flags = {
        "nonnegative": bool(np.all(f >= -rtol * fs)),
        "nondecreasing": bool(np.all(fp >= -rtol * ps)),
    }
    if s.size > 2:
        slope = np.diff(fp) / np.diff(s)
        ss = max(float(np.max(np.abs(slope))), 1e-300)
        flags["convex"] = bool(np.all(slope >= -1e-6 * ss))
    else:
        flags["convex"] = False
    flags["positive_at_zero"] = bool(s[0] <= 0.0 <= s[-1] and np.interp(0.0, s, f) > 0.0)
    return flags


# --------------------------------------------------------------------------
# quadrature and differentiation


def _tail(r0, r1, phi0, phi1, m) -> float:
    """Integral over (0, r0) of t^m phi(t), modelling phi from its values at r0, r1.

    phi ~ t^beta for a genuinely singular or vanishing integrand; when beta is
    small phi is taken to be smooth and even at the origin, phi ~ A + B t^2.
    """
    if phi0 == 0.0:
        return 0.0
    if phi1 == 0.0 or np.sign(phi0) != np.sign(phi1):
        return 0.0
    beta = math.log(phi1 / phi0) / math.log(r1 / r0)
    if abs(beta) < 0.1:
        b = (phi1 - phi0) / (r1**2 - r0**2)
        a = phi0 - b * r0**2
        return a * r0 ** (m + 1) / (m + 1) + b * r0 ** (m + 3) / (m + 3)
    if beta + m <= -1.0:
        return math.copysign(math.inf, phi0)
    return phi0 * r0 ** (m + 1) / (beta + m + 1.0)


def _check_finite(*arrays):
    for a in arrays:
        if a is not None and not np.all(np.isfinite(a)):
            raise InputError("integrand has non-finite samples")


def cumulative_quadrature(values, r, m: float = 0.0, deriv=None, tail: bool = True) -> np.ndarray:
    """Running integral of t^m phi(t) from 0 (tail estimate) to each node.

    Trapezoid (order 2) by default; with ``deriv`` (samples of phi') the end
    correction lifts it to order 4.
    """
    r = np.asarray(r, dtype=float)
    phi = np.asarray(values, dtype=float)
    _check_finite(phi, deriv)
    F = r**m * phi
    if deriv is None:
        out = kernels.cumtrapz(r, F)
    else:
        dF = m * r ** (m - 1.0) * phi + r**m * np.asarray(deriv, dtype=float)
        out = kernels.cumhermite(r, F, dF)
    if tail:
        out = out + _tail(r[0], r[1], phi[0], phi[1], m)
    return out


def quadrature(values, r, m: float = 0.0, lo: Optional[float] = None,
               hi: Optional[float] = None, deriv=None) -> float:
    """Integral of t^m phi(t) over [lo, hi].

    ``lo=None`` (or 0) integrates from the origin, adding a power-law tail for
    (0, r_min). Endpoints between nodes use a linear integrand on that cell.
    """
    r = np.asarray(r, dtype=float)
    phi = np.asarray(values, dtype=float)
    if lo is not None and lo <= 0.0:
        lo = None
    if lo is not None and lo < r[0]:
        raise InputError("lo lies inside (0, r_min); pass lo=None for a tail estimate")
    cum = cumulative_quadrature(phi, r, m, deriv, tail=lo is None)
    F = r**m * phi
    top = float(cum[-1]) if hi is None else _linear_partial(r, F, cum, hi)
    base = 0.0 if lo is None else _linear_partial(r, F, cum, lo)
    return top - base


def _linear_partial(r, F, cum, x):
    i = int(np.clip(np.searchsorted(r, x, side="right") - 1, 0, r.size - 2))
    t = x - r[i]
    Fx = F[i] + (F[i + 1] - F[i]) * t / (r[i + 1] - r[i])
    return float(cum[i] + 0.5 * t * (F[i] + Fx))


def stencil_size(k: int, accuracy: int) -> int:
    n = k + accuracy
    return n + 1 if n % 2 == 0 else n


def differentiate(profile: RadialProfile, k: int, accuracy: int = 2) -> RadialProfile:
    """k-th derivative of the sampled values by Fornberg stencils.

    Central stencils in the interior, shifted one-sided stencils of the same
    width at the ends.
    """
    if k not in (1, 2, 3):
        raise InputError("derivative order must be 1, 2 or 3")
    npts = stencil_size(k, accuracy)
    if profile.grid.size < npts + 1:
        raise InputError(f"grid too coarse for a derivative of order {k}")
    d = kernels.fd_derivative(profile.r, profile.values, k, npts)
    return RadialProfile(profile.grid, d, profile.dim, meta={"derivative_of": k})


def annulus_norms(profile: RadialProfile) -> dict:
    """grad_l2 and h1 norms over B_1 minus B_{1/2}."""
    if profile.d1 is None:
        raise InputError("annulus norms need u_r samples")
    r = profile.r
    if r[0] > 0.5:
        raise InputError("profile does not cover [1/2, 1]")
    sig = sphere_area(profile.dim)
    m = profile.dim - 1
    grad2 = sig * quadrature(profile.d1**2, r, m, lo=0.5,
                             deriv=None if profile.d2 is None else 2 * profile.d1 * profile.d2)
    mass2 = sig * quadrature(profile.values**2, r, m, lo=0.5,
                             deriv=2 * profile.values * profile.d1)
    return {"grad_l2": math.sqrt(max(grad2, 0.0)), "h1": math.sqrt(max(grad2 + mass2, 0.0))}


def ball_h1_norm(profile: RadialProfile) -> float:
    """H^1(B_1) norm from r_min with power-law tails for (0, r_min)."""
    d1 = profile.derivative(1)
    sig = sphere_area(profile.dim)
    m = profile.dim - 1
    grad = quadrature(d1**2, profile.r, m, deriv=None if profile.d2 is None else 2 * d1 * profile.d2)
    mass = quadrature(profile.values**2, profile.r, m, deriv=2 * profile.values * d1)
    return math.sqrt(sig * (grad + mass))


def weighted_residual(profile: RadialProfile, source: Callable, source_prime: Optional[Callable] = None) -> np.ndarray:
    """Scale-free residual of the equation in flux form at every node.

    (r^{N-1} u_r)' = -r^{N-1} g(u) integrates to
    r^{N-1} u_r(r) + int_0^r t^{N-1} g(u(t)) dt = 0; the residual divides the
    left side by the sum of the magnitudes of its two terms. Unlike a
    pointwise second difference it does not lose digits where u is nearly
    constant. ``source_prime`` (g') lifts the quadrature to fourth order.
    """
    r = profile.r
    m = profile.dim - 1
    d1 = profile.derivative(1, accuracy=4)
    g = np.asarray(source(profile.values), dtype=float)
    dg = None if source_prime is None else np.asarray(source_prime(profile.values), dtype=float) * d1
    flux = r**m * d1
    mass = cumulative_quadrature(g, r, m, deriv=dg)
    absmass = cumulative_quadrature(np.abs(g), r, m, deriv=None if dg is None else np.sign(g) * dg)
    scale = np.abs(flux) + absmass
    return np.abs(flux + mass) / np.where(scale > 0, scale, 1.0)
