"""Empirical constants for the a priori estimates on semi-stable radial solutions.

Every bound has the form lhs(r) <= K * norm * rhs(r). A check samples the
ratio lhs / (norm * rhs) on the grid, zooms in around the running maximizer,
and reports the sup, where it occurs, how the ratio behaves as r -> 0, and
whether the constant survives a 2x coarsening of the grid.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from .core import (InputError, RadialProfile, annulus_norms, ball_h1_norm, cumulative_quadrature,
                   energy_exponent, growth_exponent, regime)
from .stability import LinearizedOperator, StabilityVerdict, first_eigenvalue, gauge_first_eigenvalue

THEOREM_IDS = ("lemma_essential", "prop_rand2r", "thm_principal", "thm_extremal",
               "thm_estimas", "lemma_monotonias")

# slope of log(ratio) vs log(r) below which the ratio is taken to blow up at 0
UNBOUNDED_SLOPE = -0.05


@dataclass
class EstimateReport:
    theorem_id: str
    regime: Optional[str]
    empirical_constant: float
    sup_location: float
    holds_uniformly: bool
    refinement_trend: str
    status: str = "pass"  # pass | fail | skipped | vacuous | degenerate
    item: Optional[str] = None
    slope_at_origin: float = math.nan
    hypotheses: Dict[str, bool] = field(default_factory=dict)
    reason: str = ""
    grid_meta: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)
    trace: Optional[tuple] = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "theorem_id": self.theorem_id,
            "item": self.item,
            "regime": self.regime,
            "empirical_constant": self.empirical_constant,
            "sup_location": self.sup_location,
            "holds_uniformly": self.holds_uniformly,
            "slope_at_origin": self.slope_at_origin,
            "refinement_trend": self.refinement_trend,
            "status": self.status,
            "hypotheses": dict(self.hypotheses),
            "reason": self.reason,
            "grid_meta": dict(self.grid_meta),
            "details": dict(self.details),
        }

    def trace_csv(self) -> str:
        if self.trace is None:
            raise InputError("report carries no ratio trace")
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["r", "lhs", "rhs", "ratio"])
        for row in zip(*self.trace):
            w.writerow([repr(float(x)) for x in row])
        return buf.getvalue()


# --------------------------------------------------------------------------
# helpers


def potential_from_profile(u: RadialProfile) -> np.ndarray:
    """g'(u(r)) recovered from the profile alone: -(Delta u)_r / u_r."""
    r = u.r
    n = u.dim
    d1 = u.derivative(1, accuracy=4)
    d2 = u.derivative(2, accuracy=4)
    d3 = u.derivative(3, accuracy=4)
    num = d3 + (n - 1) * (d2 / r - d1 / r**2)
    # u_r = 0 only counts where it is small against the local derivative scale
    tiny = 1e-12 * (r * np.abs(d2) + r**2 * np.abs(d3)) + 1e-300
    out = np.zeros_like(r)
    np.divide(-num, d1, out=out, where=np.abs(d1) > tiny)
    return out


def source_from_profile(u: RadialProfile) -> np.ndarray:
    """g(u(r)) = -Delta u."""
    return -(u.derivative(2, accuracy=4) + (u.dim - 1) * u.derivative(1, accuracy=4) / u.r)


def infer_flags(u: RadialProfile, rtol: float = 1e-6) -> dict:
    """Sign, monotonicity and convexity of g read off a decreasing profile.

    u decreases in r, so g nondecreasing in u means g(u(r)) nonincreasing in r,
    and g convex means g'(u(r)) nonincreasing in r.
    """
    g = source_from_profile(u)
    gp = potential_from_profile(u)
    gs = max(float(np.max(np.abs(g))), 1e-300)
    ps = max(float(np.max(np.abs(gp))), 1e-300)
    return {
        "nonnegative": bool(np.all(g >= -rtol * gs)),
        "nondecreasing": bool(np.all(gp >= -rtol * ps)),
        "convex": bool(np.all(np.diff(gp) <= rtol * ps)),
    }


def semistability(u: RadialProfile, potential=None, tol: float = 1e-6) -> StabilityVerdict:
    if potential is None and "family" in u.meta and u.d2 is not None:
        return gauge_first_eigenvalue(u, tol)
    v = potential_from_profile(u) if potential is None else np.asarray(potential, dtype=float)
    return first_eigenvalue(LinearizedOperator(u.grid, np.broadcast_to(v, u.r.shape).copy(), u.dim), tol)


def _grid_meta(u: RadialProfile) -> dict:
    return {"size": u.grid.size, "r_min": u.grid.r_min, "grading": u.grid.grading}


def _sup(ratio_fn, r, rounds=3, zoom=10):
    """Sup of ratio_fn over [r[0], r[-1]]: grid nodes plus local zoom rounds."""
    vals = ratio_fn(r)
    i = int(np.nanargmax(vals))
    best, where = float(vals[i]), float(r[i])
    a, b = r[max(i - 1, 0)], r[min(i + 1, r.size - 1)]
    for _ in range(rounds):
        if not b > a:
            break
        pts = np.geomspace(a, b, 2 * zoom + 1)
        v = ratio_fn(pts)
        j = int(np.nanargmax(v))
        if v[j] > best:
            best, where = float(v[j]), float(pts[j])
        a, b = pts[max(j - 1, 0)], pts[min(j + 1, pts.size - 1)]
    return best, where


def origin_slope(r, ratio, shells: int = 6) -> float:
    """Log-log slope of the dyadic shell maxima of the ratio next to r_min."""
    r = np.asarray(r)
    ratio = np.asarray(ratio)
    lo = r[0]
    xs, ys = [], []
    for k in range(shells):
        m = (r >= lo * 2.0**k) & (r < lo * 2.0 ** (k + 1))
        if not np.any(m):
            continue
        top = float(np.max(ratio[m]))
        if top > 0 and math.isfinite(top):
            xs.append(math.log(lo * 2.0 ** (k + 0.5)))
            ys.append(math.log(top))
    if len(xs) < 3:
        return math.nan
    return float(np.polyfit(xs, ys, 1)[0])


def _trend(c_full, c_coarse):
    if not (math.isfinite(c_full) and math.isfinite(c_coarse)):
        return "not finite"
    rel = abs(c_full - c_coarse) / max(abs(c_full), 1e-300)
    tag = "stable" if rel < 1e-2 else ("increasing" if c_full > c_coarse else "decreasing")
    return f"{tag} (relative change {rel:.2e} under 2x coarsening)"


@dataclass
class _Bound:
    """lhs(r) <= K * rhs(r); both callable on arbitrary radii."""

    lhs: Callable
    rhs: Callable

    def ratio(self, r):
        r = np.asarray(r, dtype=float)
        den = self.rhs(r)
        with np.errstate(divide="ignore", invalid="ignore"):
            q = np.abs(self.lhs(r)) / den
        return np.where(den > 0, q, np.where(np.abs(self.lhs(r)) > 0, np.inf, 0.0))


def _evaluate(theorem_id, u, make_bound, lo=None, hi=1.0, item=None, reg=None,
              hypotheses=None, window=None, coarse=True) -> EstimateReport:
    """Shared sup / slope / refinement machinery for one bound."""
    bound = make_bound(u)
    r = u.r
    sel = (r >= (lo if lo is not None else r[0])) & (r <= hi)
    rs = r[sel]
    if rs.size < 3:
        raise InputError("too few grid nodes inside the estimate's range")
    ratio = bound.ratio(rs)
    if np.all(ratio == 0.0):
        const, loc = 0.0, float(rs[0])
    else:
        const, loc = _sup(bound.ratio, rs)
    slope = origin_slope(rs, ratio)
    finite = math.isfinite(const)
    c_coarse = const
    if coarse and u.grid.size >= 64:
        uc = u.restricted(2)
        bc = make_bound(uc)
        rc = uc.r[(uc.r >= rs[0]) & (uc.r <= hi)]
        qc = bc.ratio(rc)
        c_coarse = 0.0 if np.all(qc == 0.0) else _sup(bc.ratio, rc)[0]
    unbounded = bool(math.isfinite(slope) and slope < UNBOUNDED_SLOPE)
    holds = finite and not unbounded
    hyp = dict(hypotheses or {})
    status = "pass" if holds else "fail"
    reason = ""
    if not all(hyp.values()):
        status = "skipped"
        reason = "hypothesis not satisfied: " + ", ".join(k for k, v in sorted(hyp.items()) if not v)
    details = {}
    if window is not None:
        wm = (rs >= window[0]) & (rs <= window[1])
        if np.any(wm):
            w = ratio[wm]
            details["window"] = [float(window[0]), float(window[1])]
            details["flatness"] = float((w.max() - w.min()) / w.max()) if w.max() > 0 else 0.0
    lhs_v = np.abs(bound.lhs(rs))
    return EstimateReport(
        theorem_id=theorem_id, regime=reg, empirical_constant=float(const), sup_location=loc,
        holds_uniformly=holds, refinement_trend=_trend(const, c_coarse), status=status, item=item,
        slope_at_origin=slope, hypotheses=hyp, reason=reason, grid_meta=_grid_meta(u),
        details=details, trace=(rs, lhs_v, bound.rhs(rs), ratio))


def _interp(u: RadialProfile, k: int):
    return lambda x: u.evaluate(x, k)


def _solution_hypotheses(u, potential=None, verdict=None):
    if verdict is None:
        verdict = semistability(u, potential)
    return {"semistable": bool(verdict.semistable), "h1": math.isfinite(ball_h1_norm(u))}


# --------------------------------------------------------------------------
# weighted energy


def weighted_energy(u: RadialProfile, r):
    """int_0^r t^{N-1} u_r^2 dt, with a power-law tail for (0, r_min)."""
    x = np.asarray(r, dtype=float)
    if np.any(x < u.r[0]) or np.any(x > 1.0):
        raise InputError("weighted_energy needs r in [r_min, 1]")
    cum, spline = _energy_spline(u)
    out = spline(x)
    return float(out) if np.ndim(out) == 0 else out


def _energy_spline(u):
    r = u.r
    d1 = u.derivative(1, accuracy=4)
    d2 = u.d2
    cum = cumulative_quadrature(d1**2, r, u.dim - 1, deriv=None if d2 is None else 2 * d1 * d2)
    return cum, CubicHermiteSpline(r, cum, r ** (u.dim - 1) * d1**2)


def check_lemma_essential(u: RadialProfile, potential=None, verdict=None,
                          window=(1e-4, 0.5)) -> EstimateReport:
    n = u.dim
    hyp = _solution_hypotheses(u, potential, verdict)
    grad = annulus_norms(u.with_derivatives() if u.d1 is None else u)["grad_l2"]
    if grad == 0.0:
        return EstimateReport("lemma_essential", regime(n), 0.0, float(u.r[-1]), True,
                              "vacuous", status="vacuous", hypotheses=hyp,
                              reason="gradient vanishes on the annulus", grid_meta=_grid_meta(u))
    e = energy_exponent(n)

    def make(p):
        g2 = annulus_norms(p if p.d1 is not None else p.with_derivatives())["grad_l2"] ** 2
        _, spline = _energy_spline(p)
        return _Bound(spline, lambda x: g2 * x**e)

    return _evaluate("lemma_essential", u, make, reg=regime(n), hypotheses=hyp, window=window)


def check_rand2r(u: RadialProfile, potential=None, verdict=None) -> EstimateReport:
    n = u.dim
    hyp = _solution_hypotheses(u, potential, verdict)
    beta = growth_exponent(n)

    def make(p):
        grad = annulus_norms(p if p.d1 is not None else p.with_derivatives())["grad_l2"]
        return _Bound(lambda x: p.evaluate(x) - p.evaluate(x / 2.0), lambda x: grad * x**beta)

    if annulus_norms(u if u.d1 is not None else u.with_derivatives())["grad_l2"] == 0.0:
        return EstimateReport("prop_rand2r", regime(n), 0.0, float(u.r[-1]), True, "vacuous",
                              status="vacuous", hypotheses=hyp, grid_meta=_grid_meta(u),
                              reason="gradient vanishes on the annulus")
    return _evaluate("prop_rand2r", u, make, lo=2.0 * u.r[0], reg=regime(n), hypotheses=hyp)


def principal_bound(n: int):
    beta = growth_exponent(n)
    if n < 10:
        return lambda x: np.ones_like(x)
    if n == 10:
        return lambda x: np.abs(np.log(x)) + 1.0
    return lambda x: x**beta


def check_thm_principal(u: RadialProfile, potential=None, verdict=None) -> EstimateReport:
    n = u.dim
    hyp = _solution_hypotheses(u, potential, verdict)
    shape = principal_bound(n)

    def make(p):
        h1 = annulus_norms(p if p.d1 is not None else p.with_derivatives())["h1"]
        return _Bound(_interp(p, 0), lambda x: h1 * shape(x))

    if annulus_norms(u if u.d1 is not None else u.with_derivatives())["h1"] == 0.0:
        return EstimateReport("thm_principal", regime(n), 0.0, float(u.r[-1]), True, "vacuous",
                              status="vacuous", hypotheses=hyp, grid_meta=_grid_meta(u),
                              reason="u vanishes on the annulus")
    return _evaluate("thm_principal", u, make, reg=regime(n), hypotheses=hyp)


# --------------------------------------------------------------------------
# extremal solution


def _min_slope(p: RadialProfile) -> float:
    x = np.linspace(0.5, 1.0, 201)
    return float(np.min(np.abs(p.evaluate(x, 1))))


def _boundary_shape(n, beta):
    if n < 10:
        return "i", (lambda x: 1.0 - x)
    if n == 10:
        return "ii", (lambda x: np.abs(np.log(x)))
    return "iii", (lambda x: x**beta - 1.0)


def check_thm_extremal(ustar: RadialProfile, potential=None, verdict=None) -> List[EstimateReport]:
    """Items i)-iv) with C_N = sup ratio / min_{[1/2,1]} |u*_r|."""
    n = ustar.dim
    beta = growth_exponent(n)
    reg = regime(n)
    hyp = {} if verdict is None and potential is None else _solution_hypotheses(ustar, potential, verdict)
    m = _min_slope(ustar)
    if m == 0.0:
        return [EstimateReport("thm_extremal", reg, math.nan, math.nan, False,
                               "degenerate", status="degenerate", hypotheses=hyp,
                               reason="min |u*_r| on [1/2,1] is zero", grid_meta=_grid_meta(ustar))]
    name, shape = _boundary_shape(n, beta)
    reports = []

    def make_value(p):
        mp = _min_slope(p)
        return _Bound(lambda x: p.evaluate(x) / mp, shape)

    # both sides vanish at r = 1; the ratio's limit there is reached by the nodes before it
    reports.append(_evaluate("thm_extremal", ustar, make_value, hi=float(ustar.r[-2]), item=name,
                             reg=reg, hypotheses=hyp))
    if n >= 10:
        for k in (1, 2, 3):
            def make_k(p, k=k):
                mp = _min_slope(p)
                return _Bound(lambda x: p.evaluate(x, k) / mp, lambda x: x ** (beta - k))
            reports.append(_evaluate("thm_extremal", ustar, make_k, item=f"iv.k{k}", reg=reg,
                                     hypotheses=hyp))
    for rep in reports:
        rep.details["min_abs_ur_half_one"] = m
        # unnormalized lhs/rhs at the innermost node, the sharpness indicator
        rep.details["raw_ratio_at_r_min"] = float(rep.trace[3][0] * m)
    return reports


# --------------------------------------------------------------------------
# derivative estimates and monotonicity laws


_ESTIMAS_ITEMS = (
    ("i", 1, ("nonnegative",)),
    ("ii", 2, ("nonnegative", "nondecreasing")),
    ("iii", 3, ("nonnegative", "nondecreasing", "convex")),
)


def check_thm_estimas(u: RadialProfile, g_flags: Optional[dict] = None, potential=None,
                      verdict=None) -> List[EstimateReport]:
    """Items i)-iii) on (r_min, 1/2]; items whose flags fail are still measured
    but reported as skipped."""
    n = u.dim
    beta = growth_exponent(n)
    flags = infer_flags(u) if g_flags is None else dict(g_flags)
    base = _solution_hypotheses(u, potential, verdict)
    grad = annulus_norms(u if u.d1 is not None else u.with_derivatives())["grad_l2"]
    reports = []
    for name, k, needed in _ESTIMAS_ITEMS:
        hyp = dict(base)
        for key in needed:
            hyp[key] = bool(flags.get(key, False))
        if grad == 0.0:
            reports.append(EstimateReport("thm_estimas", regime(n), 0.0, float(u.r[0]), True,
                                          "vacuous", status="vacuous", item=name, hypotheses=hyp,
                                          reason="gradient vanishes on the annulus",
                                          grid_meta=_grid_meta(u)))
            continue

        def make(p, k=k):
            gp = annulus_norms(p if p.d1 is not None else p.with_derivatives())["grad_l2"]
            return _Bound(lambda x: p.evaluate(x, k), lambda x: gp * x ** (beta - k))

        reports.append(_evaluate("thm_estimas", u, make, hi=0.5, item=name, reg=regime(n),
                                 hypotheses=hyp))
    return reports


def _nondecreasing(a, rtol):
    scale = max(float(np.max(np.abs(a))), 1e-300)
    drop = np.diff(a)
    return bool(np.all(drop >= -rtol * scale)), float(min(0.0, drop.min()) / scale)


def check_monotonias(u: RadialProfile, g_flags: Optional[dict] = None,
                     rtol: float = 1e-8) -> EstimateReport:
    """Items i)-iii) nodewise; iv) reported as q = grad_l2 / min_{[1/2,1]} |u_r|."""
    n = u.dim
    r = u.r
    d1 = np.abs(u.derivative(1, accuracy=4))
    flags = infer_flags(u) if g_flags is None else dict(g_flags)
    decreasing = bool(np.all(u.derivative(1, accuracy=4) <= rtol * max(float(d1.max()), 1e-300)))
    hyp = {"decreasing": decreasing, "nonnegative": bool(flags.get("nonnegative")),
           "nondecreasing": bool(flags.get("nondecreasing"))}
    ok1, worst1 = _nondecreasing(r ** (n - 1) * d1, rtol)
    ok2, worst2 = _nondecreasing(-(d1 / r), rtol)
    x = np.linspace(0.5, 1.0, 401)
    ux = np.abs(u.evaluate(x, 1))
    mx, mn = float(ux.max()), float(ux.min())
    ratio3 = mx / mn if mn > 0 else (math.inf if mx > 0 else 1.0)
    ok3 = ratio3 <= 2.0 ** (n - 1)
    grad = annulus_norms(u if u.d1 is not None else u.with_derivatives())["grad_l2"]
    q = grad / mn if mn > 0 else (0.0 if grad == 0 else math.inf)
    holds = ok1 and ok2 and ok3 and math.isfinite(q)
    status = "pass" if holds else "fail"
    reason = ""
    # r |u_r| is scale free; differencing noise on a constant stays near eps |u|
    if float(np.max(r * d1)) <= 1e-10 * max(1.0, float(np.max(np.abs(u.values)))):
        status, reason = "vacuous", "u is constant: every monotone quantity vanishes identically"
    elif not all(hyp.values()):
        status = "skipped"
        reason = "hypothesis not satisfied: " + ", ".join(k for k, v in sorted(hyp.items()) if not v)
    return EstimateReport(
        "lemma_monotonias", regime(n), float(q), float(x[int(np.argmin(ux))]), holds,
        "nodewise", status=status, hypotheses=hyp, reason=reason, grid_meta=_grid_meta(u),
        details={"i": ok1, "ii": ok2, "iii": ok3, "max_min_ratio": ratio3,
                 "bound_iii": 2.0 ** (n - 1), "worst_drop_i": worst1, "worst_drop_ii": worst2})


def verify_all(u: RadialProfile, extremal: bool = False, potential=None) -> List[EstimateReport]:
    """Run every applicable check on one profile, sharing the stability verdict."""
    verdict = semistability(u, potential)
    reports = [check_lemma_essential(u, potential, verdict), check_rand2r(u, potential, verdict),
               check_thm_principal(u, potential, verdict)]
    reports += check_thm_estimas(u, potential=potential, verdict=verdict)
    reports.append(check_monotonias(u))
    if extremal:
        reports += check_thm_extremal(u, potential, verdict)
    return reports
