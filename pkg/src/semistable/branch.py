"""Minimal solutions of -Delta u = lambda f(u) in the unit ball by shooting.

The branch is parameterized by the center value a = u(0); for fixed a the
boundary value u(1) decreases in lambda, so lambda(a) is found by bisection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy.optimize import minimize_scalar

from . import kernels
from .core import (InputError, Nonlinearity, RadialGrid, RadialProfile, SemistableError,
                   check_dimension, weighted_residual)
from .stability import LinearizedOperator, first_eigenvalue


class BracketError(SemistableError):
    def __init__(self, a, msg="could not bracket lambda"):
        super().__init__(f"{msg} (a = {a!r})")
        self.a = a


@dataclass(frozen=True)
class ShootConfig:
    max_step: float = 2e-3  # RK4 step in log r
    ceiling: float = 1e8
    series_tol: float = 1e-4  # |u(r_start) - a| allowed for the series start
    tol_u: float = 1e-9
    tol_lambda: float = 1e-9
    max_bisect: int = 200


@dataclass
class ShootResult:
    profile: Optional[RadialProfile]
    boundary_value: float
    outcome: str  # "ok" | "blowup" | "crossed"
    u: np.ndarray
    ur: np.ndarray


def _start(f: Nonlinearity, dim, lam, a, r0, cfg):
    fa = float(f(a))
    b2 = -lam * fa / (2.0 * dim)
    if b2 == 0.0:
        return r0, a, 0.0
    rs = min(r0, math.sqrt(cfg.series_tol / abs(b2)))
    b4 = lam * lam * fa * float(f.derivative(a)) / (8.0 * dim * (dim + 2.0))
    u0 = a + b2 * rs**2 + b4 * rs**4
    w0 = 2.0 * b2 * rs**2 + 4.0 * b4 * rs**4
    return rs, u0, w0


def _integrate(f, dim, lam, a, grid, cfg, stop_at_zero):
    r = grid.nodes
    rs, u0, w0 = _start(f, dim, lam, a, r[0], cfg)
    kind, p, scale, ts, tf, tfp = f.kernel_args()
    u, w, status, last = kernels.integrate_radial(
        math.log(rs), u0, w0, np.log(r), float(lam), float(dim), kind, p, scale,
        ts, tf, tfp, cfg.max_step, max(cfg.ceiling, 100.0 * abs(a)), stop_at_zero)
    return u, w, status, last


def shoot(f: Nonlinearity, dim: int, lam: float, a: float, grid: Optional[RadialGrid] = None,
          config: Optional[ShootConfig] = None) -> ShootResult:
    """Integrate u'' + (N-1)/r u' + lam f(u) = 0, u(0) = a, u'(0) = 0 up to r = 1."""
    dim = check_dimension(dim)
    if lam < 0 or a < 0:
        raise InputError("shoot needs lambda >= 0 and a >= 0")
    grid = grid or RadialGrid.geometric()
    cfg = config or ShootConfig()
    u, w, status, _ = _integrate(f, dim, lam, a, grid, cfg, False)
    r = grid.nodes
    ur = w / r
    if status == kernels.STATUS_BLOWUP:
        return ShootResult(None, math.nan, "blowup", u, ur)
    return ShootResult(_profile(f, dim, lam, grid, u, ur, a), float(u[-1]), "ok", u, ur)


def _profile(f, dim, lam, grid, u, ur, a):
    r = grid.nodes
    fu = f(u)
    urr = -(dim - 1) * ur / r - lam * fu
    urrr = (dim - 1) * ur / r**2 - (dim - 1) * urr / r - lam * f.derivative(u) * ur
    return RadialProfile(grid, u, dim, ur, urr, urrr,
                         {"decreasing": True, "lambda": float(lam), "a": float(a)})


def solve_lambda(f: Nonlinearity, dim: int, a: float, grid: RadialGrid,
                 config: Optional[ShootConfig] = None) -> float:
    """lambda with u(1) = 0 for center value a, by bracketing and bisection."""
    cfg = config or ShootConfig()

    def boundary(lam):
        u, _, status, _ = _integrate(f, dim, lam, a, grid, cfg, True)
        if status != kernels.STATUS_OK:
            return -math.inf
        return float(u[-1])

    lo, hi = 0.0, 1.0
    for _ in range(200):
        if boundary(hi) <= 0.0:
            break
        lo, hi = hi, 2.0 * hi
    else:
        raise BracketError(a)
    for _ in range(cfg.max_bisect):
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            break
        v = boundary(mid)
        if abs(v) <= cfg.tol_u:
            return mid
        if v > 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= cfg.tol_lambda * hi:
            break
    # largest lambda known to keep u(1) > 0
    return lo


@dataclass
class BranchPoint:
    lam: float
    a: float
    profile: RadialProfile
    first_eigenvalue: float = math.nan
    residual: float = math.nan
    on_minimal_branch: bool = True

    @property
    def center_value(self):
        return self.a


@dataclass
class Branch:
    dim: int
    nonlinearity: Nonlinearity
    points: List[BranchPoint]
    lambda_star_estimate: float
    lambda_star_interval: tuple
    turning_detected: bool
    low_confidence: bool = False
    meta: dict = field(default_factory=dict)

    def to_dict(self, profile_refs=None) -> dict:
        pts = []
        for i, p in enumerate(self.points):
            pts.append({
                "a": p.a,
                "lambda": p.lam,
                "eigenvalue": p.first_eigenvalue,
                "residual": p.residual,
                "on_minimal_branch": p.on_minimal_branch,
                "profile_ref": None if profile_refs is None else profile_refs[i],
            })
        return {
            "dimension": self.dim,
            "nonlinearity": self.nonlinearity.descriptor(),
            "points": pts,
            "lambda_star_estimate": self.lambda_star_estimate,
            "lambda_star_interval": list(self.lambda_star_interval),
            "turning_detected": self.turning_detected,
            "low_confidence": self.low_confidence,
        }


def make_point(f, dim, a, grid, cfg, eigen=True) -> BranchPoint:
    lam = solve_lambda(f, dim, a, grid, cfg)
    res = shoot(f, dim, lam, a, grid, cfg)
    if res.profile is None:
        raise BracketError(a, "converged lambda blows up")
    prof = res.profile
    point = BranchPoint(lam, a, prof)
    point.residual = float(np.max(weighted_residual(prof, lambda s: lam * f(s),
                                                     lambda s: lam * f.derivative(s))))
    if eigen:
        op = LinearizedOperator(grid, lam * f.derivative(prof.values), dim)
        point.first_eigenvalue = first_eigenvalue(op).first_eigenvalue
    return point


def _first_turning(lams, rel=1e-6):
    for k in range(1, len(lams) - 1):
        if lams[k] - max(lams[k - 1], lams[k + 1]) > rel * abs(lams[k]):
            return k
    return None


def solve_branch(f: Nonlinearity, dim: int, a_max: float, samples: int = 40,
                 a_min: Optional[float] = None, grid: Optional[RadialGrid] = None,
                 config: Optional[ShootConfig] = None, eigen: bool = True,
                 refine_turning: bool = True) -> Branch:
    """Sample lambda(a) on a log-spaced ladder of center values up to a_max."""
    dim = check_dimension(dim)
    if not a_max > 0:
        raise InputError("a_max must be positive")
    grid = grid or RadialGrid.geometric()
    cfg = config or ShootConfig()
    a_min = a_min or a_max * 1e-3
    ladder = np.geomspace(a_min, a_max, samples)
    points = [make_point(f, dim, float(a), grid, cfg, eigen) for a in ladder]
    lams = [p.lam for p in points]
    k = _first_turning(lams)
    turning = k is not None
    refined = False
    if turning and refine_turning:
        opt = minimize_scalar(lambda a: -solve_lambda(f, dim, a, grid, cfg),
                              bounds=(ladder[k - 1], ladder[k + 1]), method="bounded",
                              options={"xatol": 1e-7 * ladder[k]})
        best = make_point(f, dim, float(opt.x), grid, cfg, eigen)
        if best.lam >= lams[k]:
            points.append(best)
            refined = True
        points.sort(key=lambda p: p.a)
    lams = np.array([p.lam for p in points])
    lam_star = float(lams.max())
    if turning:
        a_turn = points[int(np.argmax(lams))].a
        for p in points:
            p.on_minimal_branch = p.a <= a_turn
        interval = (lam_star, lam_star)
    else:
        a1, a2 = points[-2].a, points[-1].a
        l1, l2 = points[-2].lam, points[-1].lam
        extrap = (a2 * l2 - a1 * l1) / (a2 - a1)
        interval = (lam_star, lam_star + max(0.0, extrap - lam_star))
    top = np.sort(lams)[-2:]
    low_conf = not refined and (top[1] - top[0]) > 1e-3 * abs(top[1])
    return Branch(dim, f, points, lam_star, interval, turning, low_conf,
                  {"grid_size": grid.size, "r_min": grid.r_min, "a_max": a_max, "samples": samples})


def extremal_profile(branch: Branch, rel_tol: float = 1e-6) -> RadialProfile:
    """Profile at the largest lambda (largest a among near-ties)."""
    if not branch.points:
        raise InputError("empty branch")
    lam_star = branch.lambda_star_estimate
    near = [p for p in branch.points if p.on_minimal_branch
            and lam_star - p.lam <= rel_tol * abs(lam_star)]
    best = max(near, key=lambda p: p.a)
    meta = dict(best.profile.meta)
    meta.update({"extremal": True, "low_confidence": branch.low_confidence,
                 "lambda_star_estimate": lam_star})
    prof = best.profile
    return RadialProfile(prof.grid, prof.values, prof.dim, prof.d1, prof.d2, prof.d3, meta)
