"""Explicit semi-stable unbounded solutions built from a seed function h.

Given h >= 0 on (0, 1], set Phi(r) = r^a (1 + H(r)) with a = 2 sqrt(N-1) and
H(r) = int_0^r h, and define u_r < 0 through Phi' = (N-1) r^{N-3} u_r^2.
Writing u_r = -r^gamma phi(r) with gamma = -N/2 + sqrt(N-1) + 1 gives

    phi^2 = (a (1 + H) + r h) / (N - 1),

so every derivative of u, the source g = -Delta u and r^2 g'(u) follow in
closed form from h, h' and h''. Seeds are sums of polynomial terms and
shifted, scaled copies of a compactly supported C^3 bump and its
antiderivatives, which keeps H exact as well.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Tuple

import numpy as np
from numpy.polynomial import Polynomial

from . import kernels
from .core import (ConstructionError, HypothesisError, InputError, Nonlinearity, RadialGrid,
                   RadialProfile, ball_h1_norm, check_dimension, growth_exponent)
from .stability import StabilityVerdict, gauge_first_eigenvalue, radial_form_test, random_eta_suite

# --------------------------------------------------------------------------
# the bump b(x) = (315/256)(1 - x^2)^4 on [-1, 1] and its primitives

_BUMP_C = 315.0 / 256.0
_B0 = Polynomial([1.0, 0.0, -1.0]) ** 4 * _BUMP_C
_LEVELS: Dict[int, Polynomial] = {0: _B0, -1: _B0.deriv(), -2: _B0.deriv(2)}
for _k in (1, 2, 3):
    _LEVELS[_k] = _LEVELS[_k - 1].integ(lbnd=-1.0)
# right of the support: S = 1, S2 = x, S3 = S3(1) + (x^2 - 1)/2
_RIGHT = {
    -2: Polynomial([0.0]),
    -1: Polynomial([0.0]),
    0: Polynomial([0.0]),
    1: Polynomial([1.0]),
    2: Polynomial([0.0, 1.0]),
    3: Polynomial([float(_LEVELS[3](1.0)) - 0.5, 0.0, 0.5]),
}
BUMP_PEAK = float(_B0(0.0))


def bump_level(level: int, x) -> np.ndarray:
    """B_level(x): level 0 is the bump, positive levels its primitives from -1,
    negative levels its derivatives."""
    if level not in _LEVELS:
        raise InputError("bump level must lie in -2..3")
    x = np.asarray(x, dtype=float)
    xc = np.clip(x, -1.0, 1.0)
    if level == 0:
        inside = _BUMP_C * (1.0 - xc * xc) ** 4  # factored form stays >= 0 at the support edge
    else:
        inside = _LEVELS[level](xc)
    return np.where(x < -1.0, 0.0, np.where(x > 1.0, _RIGHT[level](x), inside))


@dataclass(frozen=True)
class SeedTerm:
    """amp * width^level * B_level((r - center) / width)."""

    level: int
    amp: float
    center: float
    width: float

    def __post_init__(self):
        if self.level not in range(-2, 4):
            raise InputError("seed term level must lie in -2..3")
        if not (self.width > 0 and math.isfinite(self.amp) and math.isfinite(self.center)):
            raise InputError("seed term needs a finite amplitude/center and positive width")

    def value(self, r, k: int = 0):
        """k-th derivative (k = -1 is the primitive vanishing at r = 0)."""
        x = (np.asarray(r, dtype=float) - self.center) / self.width
        lev = self.level - k
        w = self.width ** lev
        out = self.amp * w * bump_level(lev, x)
        if k == -1:
            out = out - self.amp * w * bump_level(lev, -self.center / self.width)
        return out


@dataclass(frozen=True)
class Seed:
    """h(r) = sum_k poly[k] r^k + sum of bump terms."""

    poly: Tuple[float, ...] = ()
    terms: Tuple[SeedTerm, ...] = ()

    def h(self, r, k: int = 0) -> np.ndarray:
        """k-th derivative of h for k in {0, 1, 2}; k = -1 gives H."""
        r = np.asarray(r, dtype=float)
        p = Polynomial(list(self.poly) or [0.0])
        if k == -1:
            p = p.integ(lbnd=0.0)
        elif k > 0:
            p = p.deriv(k)
        out = p(r) * np.ones_like(r)
        for t in self.terms:
            out = out + t.value(r, k)
        return out

    def H(self, r) -> np.ndarray:
        return self.h(r, -1)

    def features(self):
        """(centers, half-widths) where the grid should be refined."""
        return ([t.center for t in self.terms], [t.width for t in self.terms])

    def to_dict(self) -> dict:
        return {"kind": "bumps", "poly": list(self.poly),
                "terms": [[t.level, t.amp, t.center, t.width] for t in self.terms]}

    @classmethod
    def from_dict(cls, d: dict) -> "Seed":
        if d.get("kind", "bumps") != "bumps":
            raise InputError(f"unknown seed kind {d.get('kind')!r}")
        terms = tuple(SeedTerm(int(a), float(b), float(c), float(w)) for a, b, c, w in d.get("terms", []))
        return cls(tuple(float(x) for x in d.get("poly", [])), terms)

    @classmethod
    def zero(cls) -> "Seed":
        return cls()

    @classmethod
    def monomial(cls, coeff: float, power: int) -> "Seed":
        return cls(tuple([0.0] * power + [float(coeff)]))

    @classmethod
    def bumps(cls, amps, centers, widths) -> "Seed":
        return cls((), tuple(SeedTerm(0, float(a), float(c), float(w))
                             for a, c, w in zip(amps, centers, widths)))


def random_seed(rng: np.random.Generator, count: Optional[int] = None) -> Seed:
    """A few random nonnegative bumps inside (0, 1)."""
    count = int(rng.integers(1, 5)) if count is None else count
    amps, centers, widths = [], [], []
    for _ in range(count):
        c = float(rng.uniform(0.05, 0.95))
        w = float(rng.uniform(0.01, min(c, 1.0 - c, 0.3)))
        centers.append(c)
        widths.append(w)
        amps.append(float(rng.uniform(0.1, 5.0)))
    return Seed.bumps(amps, centers, widths)


# --------------------------------------------------------------------------
# family specification and closed-form fields


@dataclass(frozen=True)
class FamilySpec:
    dim: int
    seed: Seed = field(default_factory=Seed)
    force: bool = False  # build even when N < 10 (used for negative controls)

    def __post_init__(self):
        check_dimension(self.dim)
        if self.dim < 10 and not self.force:
            raise HypothesisError("the construction requires N >= 10")

    @property
    def a(self) -> float:
        return 2.0 * math.sqrt(self.dim - 1.0)

    def phi(self, r):
        r = np.asarray(r, dtype=float)
        return r**self.a * (1.0 + self.seed.H(r))

    def phiprime(self, r):
        r = np.asarray(r, dtype=float)
        return r ** (self.a - 1.0) * (self.a * (1.0 + self.seed.H(r)) + r * self.seed.h(r))

    def to_dict(self) -> dict:
        return {"N": self.dim, "h": self.seed.to_dict(), "normalization": "u(1)=0"}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    @classmethod
    def from_dict(cls, d: dict, force: bool = False) -> "FamilySpec":
        if d.get("normalization", "u(1)=0") != "u(1)=0":
            raise InputError("only the normalization u(1)=0 is supported")
        return cls(int(d["N"]), Seed.from_dict(d.get("h", {})), force)

    @classmethod
    def from_json(cls, text: str, force: bool = False) -> "FamilySpec":
        return cls.from_dict(json.loads(text), force)


def fields(spec: FamilySpec, r) -> dict:
    """All closed-form quantities of the construction at the radii r."""
    r = np.asarray(r, dtype=float)
    n = spec.dim
    a = spec.a
    gam = growth_exponent(n) - 1.0
    h0, h1, h2 = (spec.seed.h(r, k) for k in (0, 1, 2))
    H = spec.seed.H(r)
    q = a * (1.0 + H) + r * h0
    if np.any(q <= 0.0):
        raise ConstructionError("Phi' must be positive on (0, 1]")
    psi = q / (n - 1.0)
    dpsi = ((a + 1.0) * h0 + r * h1) / (n - 1.0)
    ddpsi = ((a + 2.0) * h1 + r * h2) / (n - 1.0)
    phi = np.sqrt(psi)
    dphi = dpsi / (2.0 * phi)
    ddphi = ddpsi / (2.0 * phi) - dpsi**2 / (4.0 * phi**3)
    rg = r**gam
    ur = -rg * phi
    urr = -(gam * rg / r * phi + rg * dphi)
    urrr = -(gam * (gam - 1.0) * rg / r**2 * phi + 2.0 * gam * rg / r * dphi + rg * ddphi)
    g = rg / r * ((gam + n - 1.0) * phi + r * dphi)
    r2gp = -r**2 * urrr / ur - (n - 1.0) * r * urr / ur + (n - 1.0)
    return {"h": h0, "h1": h1, "h2": h2, "H": H, "Phi": r**a * (1.0 + H),
            "dPhi": r ** (a - 1.0) * q, "phi": phi, "dphi": dphi, "ddphi": ddphi,
            "ur": ur, "urr": urr, "urrr": urrr, "g": g, "r2gp": r2gp}


_LEVEL_SUP = {lev: float(np.max(np.abs(bump_level(lev, np.linspace(-1.0, 1.0, 2001)))))
              for lev in _LEVELS}


def _edge_nodes(spec: FamilySpec, t: SeedTerm) -> np.ndarray:
    """Nodes clustered toward both ends of a term's support.

    Where r h rises from 0 past a (1 + H) the fields change on the scale
    delta w with delta ~ contrast^{-1/4} (the bump vanishes to fourth order),
    which a uniform refinement misses once the term dwarfs the background.
    """
    contrast = abs(t.amp) * t.width**t.level * _LEVEL_SUP[t.level] * max(t.center, 0.0) / spec.a
    if contrast <= 1.0:
        return np.empty(0)
    delta = contrast**-0.25
    d = np.geomspace(delta / 16.0, 1.0, int(12 * math.log10(16.0 / delta)) + 4)
    return t.center + t.width * np.concatenate((d - 1.0, 1.0 - d))


def default_grid(spec: FamilySpec, n: int = 2000, r_min: float = 1e-6) -> RadialGrid:
    grid = RadialGrid.geometric(n, r_min)
    centers, widths = spec.seed.features()
    if centers:
        grid = grid.refined(centers, widths)
        grid = grid.merged([_edge_nodes(spec, t) for t in spec.seed.terms])
    return grid


def build_family(spec: FamilySpec, grid: Optional[RadialGrid] = None) -> RadialProfile:
    """The radial profile with u(1) = 0, carrying u_r, u_rr, u_rrr."""
    grid = grid or default_grid(spec)
    r = grid.nodes
    h = spec.seed.h(r)
    if np.any(h < 0.0):
        raise InputError("the seed h must be nonnegative")
    f = fields(spec, r)
    absur = -f["ur"]
    # accumulate inward from r = 1 so the O(1) values near the boundary keep full precision
    u = -kernels.cumhermite(r[::-1], absur[::-1], -f["urr"][::-1])[::-1]
    gam = growth_exponent(spec.dim) - 1.0
    meta = {"decreasing": True, "family": spec.to_dict(), "unbounded": bool(gam <= -1.0),
            "h1_finite": True}
    prof = RadialProfile(grid, u, spec.dim, f["ur"], f["urr"], f["urrr"], meta)
    meta["h1_finite"] = bool(math.isfinite(ball_h1_norm(prof)))
    return prof


# --------------------------------------------------------------------------
# recovering g and shooting with it


def recover_g(u: RadialProfile) -> Nonlinearity:
    """Tabulate g(s) = -Delta u(u^{-1}(s)) for s in [u(1), u(r_min)].

    g' is tabulated as -(Delta u)_r / u_r when u_rrr is available, which makes
    the table a cubic Hermite interpolant.
    """
    if u.d1 is None or u.d2 is None:
        raise InputError("recovering g needs u_r and u_rr")
    s = u.values
    if np.any(np.diff(s) >= 0.0):
        raise InputError("u must be strictly decreasing to be inverted")
    r = u.r
    n = u.dim
    lap = u.d2 + (n - 1) * u.d1 / r
    gp = None
    if u.d3 is not None:
        gp = -(u.d3 + (n - 1) * (u.d2 / r - u.d1 / r**2)) / u.d1
        gp = gp[::-1]
    return Nonlinearity.table(s[::-1].copy(), (-lap)[::-1].copy(), gp)


def g_table_csv(g: Nonlinearity) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["s", "g", "gprime"])
    for row in zip(g.table_s, g.table_f, g.table_fp):
        w.writerow([repr(float(x)) for x in row])
    return buf.getvalue()


def shoot_outward(g: Nonlinearity, u: RadialProfile, max_step: float = 2e-3) -> np.ndarray:
    """Integrate u'' + (N-1) u'/r + g(u) = 0 from r_min with the data of u there."""
    r = u.r
    kind, p, scale, ts, tf, tfp = g.kernel_args()
    out, _, status, last = kernels.integrate_radial(
        math.log(r[0]), float(u.values[0]), float(r[0] * u.derivative(1)[0]), np.log(r), 1.0,
        float(u.dim), kind, p, scale, ts, tf, tfp, max_step, math.inf, False)
    if status != kernels.STATUS_OK:
        raise ConstructionError(f"round-trip integration stopped at r = {r[max(last, 0)]:.3e}")
    return out


def round_trip_error(u: RadialProfile, g: Optional[Nonlinearity] = None) -> float:
    """max |u_shot - u| / max |u| on [2 r_min, 1]."""
    g = g or recover_g(u)
    shot = shoot_outward(g, u)
    m = u.r >= 2.0 * u.r[0]
    return float(np.max(np.abs(shot[m] - u.values[m])) / np.max(np.abs(u.values[m])))


# --------------------------------------------------------------------------
# generalized Hardy inequality and semi-stability


@dataclass
class HardyResult:
    lhs: float
    rhs: float
    holds: bool


def hardy_check(phi, xi: Callable, xi_prime: Optional[Callable] = None, L: float = 1.0,
                phi_prime: Optional[Callable] = None, nodes: int = 20001,
                eps: float = 1e-10) -> HardyResult:
    """int 4 Phi^2 / Phi' xi'^2 >= int Phi' xi^2 on (0, L) for compactly supported xi.

    ``phi`` is a FamilySpec or a callable Phi (then ``phi_prime`` is required).
    """
    from scipy.integrate import simpson

    if isinstance(phi, FamilySpec):
        P, dP = phi.phi, phi.phiprime
    else:
        if phi_prime is None:
            raise InputError("a raw Phi needs its derivative")
        P, dP = phi, phi_prime
    t = np.linspace(0.0, L, nodes)[1:]
    x = np.asarray(xi(t), dtype=float) * np.ones_like(t)
    dx = np.gradient(x, t, edge_order=2) if xi_prime is None else np.asarray(xi_prime(t), dtype=float) * np.ones_like(t)
    supp = (np.abs(x) > 0) | (np.abs(dx) > 0)
    if not np.any(supp):
        return HardyResult(0.0, 0.0, True)
    dp = np.asarray(dP(t), dtype=float)
    if np.any(dp[supp] <= 0.0):
        raise InputError("Phi' must be positive on the support of xi")
    p = np.asarray(P(t), dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.where(supp, 4.0 * p**2 / dp, 0.0)
    lhs = float(simpson(w * dx**2, x=t))
    rhs = float(simpson(np.where(supp, dp, 0.0) * x**2, x=t))
    return HardyResult(lhs, rhs, bool(lhs >= rhs - eps * max(abs(lhs), abs(rhs), 1.0)))


def verify_family_semistability(spec: FamilySpec, u: RadialProfile, count: int = 12,
                                seed: int = 0, tol: float = 1e-6) -> StabilityVerdict:
    """Pointwise Phi' >= a Phi / r, a randomized radial form test, and mu_1."""
    r = u.r
    f = fields(spec, r)
    lhs = f["dPhi"]
    rhs = spec.a * f["Phi"] / r
    if np.any(lhs < rhs * (1.0 - 1e-12)):
        i = int(np.argmax(rhs - lhs))
        raise ConstructionError(f"Phi' < 2 sqrt(N-1) Phi / r at r = {r[i]:.6e}")
    forms = [radial_form_test(u, eta, eta_p) for eta, eta_p in random_eta_suite(r[0], count, seed)]
    forms_ok = all(ft.holds for ft in forms)
    # the gauge form avoids sampling g'(u), which tall narrow bumps make huge and nearly cancelling
    spectral = gauge_first_eigenvalue(u, tol)
    ok = forms_ok and spectral.semistable
    spectral.details.update({
        "pointwise": True,
        "forms": forms_ok,
        "forms_tested": len(forms),
        "worst_form_gap": float(min(ft.rhs - ft.lhs for ft in forms)) if forms else 0.0,
        "spectral": spectral.semistable,
    })
    return StabilityVerdict(spectral.first_eigenvalue, ok, spectral.margin, "pointwise+forms+spectral",
                            spectral.grid_size, spectral.r_min, spectral.reliable, spectral.details)


def unboundedness_slope(u: RadialProfile, shells: int = 8) -> float:
    """Log-log slope of the dyadic increments u(t) - u(2t) next to r_min.

    The increments of an unbounded profile do not decay (slope <= 0); those
    of a bounded one shrink like a positive power of t.
    """
    r0 = u.r[0]
    t = r0 * 2.0 ** np.arange(shells)
    t = t[2.0 * t <= 1.0]
    inc = u.evaluate(t) - u.evaluate(2.0 * t)
    if np.any(inc <= 0):
        return math.nan
    return float(np.polyfit(np.log(t), np.log(inc), 1)[0])


def verify_family(spec: FamilySpec, u: Optional[RadialProfile] = None, count: int = 12,
                  seed: int = 0) -> dict:
    """Every conclusion of the construction, checked on one member."""
    u = u or build_family(spec)
    r = u.r
    n = spec.dim
    f = fields(spec, r)
    ident = (n - 1.0) * r ** (n - 3.0) * u.d1**2 - f["dPhi"]
    identity = float(np.max(np.abs(ident) / f["dPhi"]))
    lower = math.sqrt(2.0) * (n - 1.0) ** -0.25 * r ** (growth_exponent(n) - 1.0)
    lower_ok = bool(np.all(np.abs(u.d1) >= lower * (1.0 - 1e-12)))
    h1 = ball_h1_norm(u)
    half = build_family(spec, _halved(u.grid))
    h1_half = ball_h1_norm(half)
    h1_change = abs(h1_half - h1) / h1 if h1 > 0 else 0.0
    slope = unboundedness_slope(u)
    unbounded = bool(math.isfinite(slope) and slope <= 0.05)
    verdict = verify_family_semistability(spec, u, count, seed)
    try:
        trip = round_trip_error(u)
    except ConstructionError:
        trip = math.inf
    return {
        "N": n,
        "identity_residual": identity,
        "lower_bound": lower_ok,
        "h1": h1,
        "h1_half_rmin": h1_half,
        "h1_relative_change": h1_change,
        "unbounded": unbounded,
        "unboundedness_slope": slope,
        "semistable": verdict.semistable,
        "mu1": verdict.first_eigenvalue,
        "verdict": verdict.to_dict(),
        "round_trip_error": trip,
        "theorem_holds": bool(identity < 1e-8 and lower_ok and math.isfinite(h1) and unbounded
                              and verdict.semistable),
    }


def _halved(grid: RadialGrid) -> RadialGrid:
    """The same grid extended down to r_min / 2 with its innermost spacing."""
    r = grid.nodes
    k = max(1, int(math.ceil(math.log(2.0) / math.log(r[1] / r[0]))))
    inner = np.geomspace(r[0] / 2.0, r[0], k + 1)[:-1]
    return RadialGrid(np.concatenate((inner, r)), grid.grading)


# --------------------------------------------------------------------------
# counterexamples


@dataclass(frozen=True)
class CounterexampleTarget:
    radii: Tuple[float, ...]
    magnitudes: Tuple[float, ...]
    order: int

    def __post_init__(self):
        r = np.asarray(self.radii, dtype=float)
        m = np.asarray(self.magnitudes, dtype=float)
        if r.size == 0 or r.shape != m.shape:
            raise InputError("radii and magnitudes must be nonempty and of equal length")
        if np.any(r <= 0) or np.any(r > 1) or np.any(np.diff(r) >= 0):
            raise InputError("radii must be strictly decreasing inside (0, 1]")
        if np.any(~np.isfinite(m)) or np.any(m <= 0):
            raise InputError("magnitudes must be positive and finite")
        if self.order not in (1, 2, 3):
            raise InputError("derivative order must be 1, 2 or 3")

    @classmethod
    def dyadic(cls, count: int, magnitude: Callable[[int], float], order: int, base: float = 2.0):
        n = np.arange(1, count + 1)
        return cls(tuple(float(base) ** -n), tuple(float(magnitude(int(k))) for k in n), order)


@dataclass
class CounterexampleResult:
    target: CounterexampleTarget
    spec: FamilySpec
    u: RadialProfile
    checks: dict

    @property
    def ok(self) -> bool:
        return bool(self.checks.get("ok"))


def _gaps(radii) -> np.ndarray:
    """Distance from each r_n to its nearest neighbour (0 and 1 count as walls)."""
    r = np.asarray(radii, dtype=float)
    upper = np.concatenate(([1.0], r[:-1])) - r
    lower = r - np.concatenate((r[1:], [0.0]))
    upper = np.where(upper > 0, upper, np.inf)
    return np.minimum(upper, lower)


def _grid_for(spec: FamilySpec, target: CounterexampleTarget, n: int, r_min: Optional[float]):
    # just inside the deepest bump (its support starts at >= 0.75 r_last), so the shells
    # next to r_min still see the targets
    r_min = r_min or 0.7 * target.radii[-1]
    return default_grid(spec, n, r_min)


def _derivative_at(spec, target):
    k = target.order
    f = fields(spec, np.asarray(target.radii))
    return np.abs(f[{1: "ur", 2: "urr", 3: "urrr"}[k]])


def counterexample_first(target: CounterexampleTarget, dim: int = 10, grid_nodes: int = 2000,
                         r_min: Optional[float] = None) -> CounterexampleResult:
    """Bumps with h(r_n) = (N-1) M_n^2 r_n^{N - 2 sqrt(N-1) - 3}."""
    n = check_dimension(dim)
    if n < 10:
        raise HypothesisError("the construction requires N >= 10")
    r = np.asarray(target.radii)
    m = np.asarray(target.magnitudes)
    with np.errstate(over="ignore"):
        y = (n - 1.0) * m**2 * r ** (n - 2.0 * math.sqrt(n - 1.0) - 3.0)
    if not np.all(np.isfinite(y)):
        bad = int(np.argmax(~np.isfinite(y)))
        raise ConstructionError(f"bump height overflows at n = {bad + 1}")
    # bump n carries mass y_n w_n / b(0) <= 1/n^2, so h stays integrable as n grows
    k = np.arange(1, r.size + 1, dtype=float)
    widths = np.minimum(_gaps(r) / 4.0, BUMP_PEAK / (k * k * y))
    spec = FamilySpec(n, Seed.bumps(y / BUMP_PEAK, r, widths))
    u = build_family(spec, _grid_for(spec, target, grid_nodes, r_min))
    got = _derivative_at(spec, target)
    inside = r >= u.r[0]
    ok = bool(np.all(got[inside] >= m[inside]))
    return CounterexampleResult(target, spec, u, {
        "ok": ok, "heights": y.tolist(), "widths": widths.tolist(), "achieved": got.tolist(),
        "verified_indices": int(inside.sum())})


def second_constants(n: int) -> dict:
    """D_N, E_N, F_N with G_N = 4 sqrt(N-1) + 1."""
    G = 4.0 * math.sqrt(n - 1.0) + 1.0
    D = math.sqrt(G / (n - 1.0))
    return {"G": G, "D": D, "E": 1.0 / (2.0 * (n - 1.0) * D), "F": (n - 3.0) * D / 2.0}


def _staircase(r, slopes, scale: float = 1.0):
    """Weights c_n = 2^{-n} and ramp widths giving slope >= slopes[n] at r_n."""
    r = np.asarray(r, dtype=float)
    c = 2.0 ** -np.arange(1, r.size + 1)
    w = scale * c * BUMP_PEAK / np.asarray(slopes, dtype=float)
    cap = _gaps(r) / 4.0
    shrunk = w > cap
    return c, np.minimum(w, cap), shrunk


def counterexample_second(target: CounterexampleTarget, dim: int = 10, grid_nodes: int = 2000,
                          r_min: Optional[float] = None) -> CounterexampleResult:
    """Increasing 0 <= h <= 1 with h'(r_n) >= y_n where
    E_N y_n r_n^beta - F_N r_n^{beta - 2} = M_n."""
    n = check_dimension(dim)
    if n < 10:
        raise HypothesisError("the construction requires N >= 10")
    k = second_constants(n)
    beta = growth_exponent(n)
    r = np.asarray(target.radii)
    m = np.asarray(target.magnitudes)
    y = (m + k["F"] * r ** (beta - 2.0)) / (k["E"] * r**beta)
    c, w, shrunk = _staircase(r, y)
    # each term is a step of height c_n: amp * w * S with amp = c_n / w_n
    spec = FamilySpec(n, Seed((), tuple(SeedTerm(1, float(ci / wi), float(ri), float(wi))
                                        for ci, ri, wi in zip(c, r, w))))
    u = build_family(spec, _grid_for(spec, target, grid_nodes, r_min))
    f = fields(spec, u.r)
    got = _derivative_at(spec, target)
    inside = r >= u.r[0]
    hit = got >= m
    dbound = bool(np.all(np.abs(f["ur"]) <= k["D"] * u.r ** (beta - 1.0) * (1.0 + 1e-12)))
    g = recover_g(u)
    g_min = float(np.min(g.table_f))
    h = spec.seed.h(u.r)
    ok = bool(np.all(hit[inside]) and g_min >= 0.0 and dbound)
    return CounterexampleResult(target, spec, u, {
        "ok": ok, "slopes": y.tolist(), "widths": w.tolist(), "shrunk": shrunk.tolist(),
        "achieved": got.tolist(), "infeasible": [int(i) + 1 for i in np.nonzero(~hit & inside)[0]],
        "g_min": g_min, "D_bound": dbound, "h_range": [float(h.min()), float(h.max())],
        "constants": k, "verified_indices": int(inside.sum())})


def third_sigma(n: int) -> float:
    beta = growth_exponent(n)
    return -(beta - 1.0) * (beta - 2.0) * math.sqrt(2.0) * (n - 1.0) ** -0.25


def _third_seed(r, y, eps):
    """h = int_0^r z with z = eps (1 - sum c_n S((t - r_n)/w_n)), so h'' = z'."""
    c, w, shrunk = _staircase(r, y, scale=eps)
    terms = []
    const = 0.0
    for ci, ri, wi in zip(c, r, w):
        amp = -eps * ci / wi
        terms.append(SeedTerm(2, float(amp), float(ri), float(wi)))
        const -= amp * wi**2 * float(bump_level(2, -ri / wi))
    return Seed((const, eps), tuple(terms)), w, shrunk


def counterexample_third(target: CounterexampleTarget, dim: int = 10, grid_nodes: int = 2000,
                         r_min: Optional[float] = None, eps: Optional[float] = None,
                         eps_floor: float = 1e-10, iterations: int = 40) -> CounterexampleResult:
    """Concave h with 0 <= h' <= eps' and h''(r_n) <= -y_n.

    eps' is the largest cap (found by bisection in log scale) for which
    r^2 g'(u) >= (N-2)^2/8 on the grid and |u_rrr(r_n)| >= M_n.
    """
    n = check_dimension(dim)
    if n < 10:
        raise HypothesisError("the construction requires N >= 10")
    beta = growth_exponent(n)
    sigma = third_sigma(n)
    r = np.asarray(target.radii)
    m = np.asarray(target.magnitudes)
    denom = 2.0 * math.sqrt(2.0) * (n - 1.0) ** -0.25 + 1.0
    y = (r ** (3.0 - beta) * m - sigma + 1.0) * denom * (n - 1.0) / r**3
    margin = (n - 2.0) ** 2 / 8.0

    def attempt(e):
        seed, w, shrunk = _third_seed(r, y, e)
        spec = FamilySpec(n, seed)
        grid = _grid_for(spec, target, grid_nodes, r_min)
        f = fields(spec, grid.nodes)
        got = _derivative_at(spec, target)
        inside = r >= grid.r_min
        worst = int(np.argmin(f["r2gp"]))
        good = bool(f["r2gp"][worst] >= margin and np.all(got[inside] >= m[inside]))
        return good, spec, grid, f, got, w, shrunk, float(grid.nodes[worst]), float(f["r2gp"][worst])

    if eps is not None:
        best = attempt(eps)
        chosen = eps
    else:
        best = attempt(1.0)
        chosen = 1.0
        if not best[0]:
            lo, hi = math.log(eps_floor), 0.0
            low = attempt(eps_floor)
            if not low[0]:
                raise ConstructionError(
                    f"no slope cap down to {eps_floor:g} keeps r^2 g'(u) >= {margin:g}; "
                    f"worst radius {low[7]:.6e} (value {low[8]:.6g})")
            best, chosen = low, eps_floor
            for _ in range(iterations):
                mid = 0.5 * (lo + hi)
                trial = attempt(math.exp(mid))
                if trial[0]:
                    lo, best, chosen = mid, trial, math.exp(mid)
                else:
                    hi = mid
    good, spec, grid, f, got, w, shrunk, worst_r, worst_v = best
    u = build_family(spec, grid)
    g = recover_g(u)
    inside = r >= grid.r_min
    hit = got >= m
    ok = bool(good and np.all(hit[inside]) and np.min(g.table_f) >= 0.0 and np.all(f["r2gp"] > 0))
    return CounterexampleResult(target, spec, u, {
        "ok": ok, "eps_prime": chosen, "sigma": sigma, "curvatures": y.tolist(), "widths": w.tolist(),
        "shrunk": shrunk.tolist(), "achieved": got.tolist(),
        "infeasible": [int(i) + 1 for i in np.nonzero(~hit & inside)[0]],
        "g_min": float(np.min(g.table_f)), "r2gp_min": float(np.min(f["r2gp"])),
        "r2gp_min_at": worst_r, "margin": margin, "verified_indices": int(inside.sum())})
