import math

import numpy as np
import pytest
from scipy.optimize import brentq

from semistable.branch import shoot, solve_lambda
from semistable.core import (Nonlinearity, RadialGrid, RadialProfile, growth_exponent,
                             jl_exponent)
from semistable.estimates import (check_lemma_essential, check_monotonias, check_rand2r,
                                  check_thm_estimas, check_thm_extremal, check_thm_principal,
                                  infer_flags, potential_from_profile, verify_all, weighted_energy)
from semistable.family import CounterexampleTarget, counterexample_first

GRID = RadialGrid.geometric(2000, 1e-6)
SIGMA9 = math.pi**5 / 12.0
GRAD2_LOG10 = SIGMA9 * (1.0 - 2.0**-8) / 2.0  # closed form of int_{1/2}^1 4 t^7 dt times sigma_9


def log_profile(n, grid=GRID, c=2.0):
    r = grid.nodes
    return RadialProfile(grid, -c * np.log(r), n, -c / r, c / r**2, -2 * c / r**3,
                         {"decreasing": True})


def jl_profile(n=16, grid=GRID):
    p = jl_exponent(n)
    al = 2.0 / (p - 1.0)
    r = grid.nodes
    return RadialProfile(grid, r**-al - 1.0, n, -al * r ** (-al - 1.0),
                         al * (al + 1.0) * r ** (-al - 2.0),
                         -al * (al + 1.0) * (al + 2.0) * r ** (-al - 3.0), {"decreasing": True})


def constant_profile(n=10, grid=GRID):
    r = grid.nodes
    z = np.zeros_like(r)
    return RadialProfile(grid, np.full_like(r, 3.0), n, z, z, z)


def test_weighted_energy_closed_form():
    u = log_profile(10)
    assert weighted_energy(u, 1.0) == pytest.approx(0.5, rel=1e-6)
    r = np.array([1e-3, 0.01, 0.3, 0.77])
    assert np.allclose(weighted_energy(u, r), r**8 / 2.0, rtol=1e-5)


def test_weighted_energy_of_constant_is_zero():
    assert weighted_energy(constant_profile(), 0.5) == 0.0


def test_lemma_constant_for_log_solution():
    rep = check_lemma_essential(log_profile(10))
    exact = 0.5 / GRAD2_LOG10
    assert exact == pytest.approx(0.0393669, rel=1e-5)
    assert rep.empirical_constant == pytest.approx(exact, rel=1e-5)
    assert rep.status == "pass" and rep.holds_uniformly
    assert rep.details["flatness"] < 1e-4


def test_lemma_is_flat_for_power_solution():
    rep = check_lemma_essential(jl_profile(), potential_from_profile(jl_profile()))
    assert rep.holds_uniformly and rep.details["flatness"] < 0.05


def test_constant_profile_is_vacuous():
    u = constant_profile()
    assert check_lemma_essential(u, potential=np.zeros(GRID.size)).status == "vacuous"
    assert check_rand2r(u, potential=np.zeros(GRID.size)).status == "vacuous"
    assert check_monotonias(u, {"nonnegative": True, "nondecreasing": True}).status == "vacuous"
    for rep in check_thm_estimas(u, {"nonnegative": True, "nondecreasing": True, "convex": True},
                                 potential=np.zeros(GRID.size)):
        assert rep.status == "vacuous" and rep.empirical_constant == 0.0


def test_dyadic_gap_of_log_solution_is_constant():
    rep = check_rand2r(log_profile(10))
    grad = math.sqrt(GRAD2_LOG10)
    assert growth_exponent(10) == 0.0
    assert rep.empirical_constant == pytest.approx(2.0 * math.log(2.0) / grad, rel=1e-6)
    ratios = rep.trace[3]
    assert np.ptp(ratios) / ratios.max() < 1e-6


def test_dyadic_gap_of_power_solution_is_constant():
    u = jl_profile()
    rep = check_rand2r(u, potential_from_profile(u))
    ratios = rep.trace[3][rep.trace[0] < 0.25]
    assert np.ptp(ratios) / ratios.max() < 1e-3


def test_principal_bound_for_log_solution():
    from semistable.core import annulus_norms
    u = log_profile(10)
    h1 = annulus_norms(u)["h1"]
    rep = check_thm_principal(u)
    assert rep.status == "pass"
    assert rep.empirical_constant <= 2.0 / h1 * (1 + 1e-9)


def test_principal_bound_is_sharp_for_power_solution():
    u = jl_profile()
    rep = check_thm_principal(u, potential_from_profile(u))
    assert rep.holds_uniformly
    tail = rep.trace[3][:50]
    assert tail.min() > 0.9 * rep.empirical_constant
    assert abs(rep.slope_at_origin) < 1e-2


def test_extremal_constants_for_log_solution():
    reps = {r.item: r for r in check_thm_extremal(log_profile(10))}
    assert set(reps) == {"ii", "iv.k1", "iv.k2", "iv.k3"}
    assert reps["ii"].details["min_abs_ur_half_one"] == pytest.approx(2.0, rel=1e-9)
    assert reps["ii"].empirical_constant == pytest.approx(1.0, rel=1e-6)
    # beta = 0: |u_r| / 2 = r^{-1}, |u_rr| / 2 = r^{-2}, |u_rrr| / 2 = 2 r^{-3}
    assert reps["iv.k1"].empirical_constant == pytest.approx(1.0, rel=1e-6)
    assert reps["iv.k2"].empirical_constant == pytest.approx(1.0, rel=1e-6)
    assert reps["iv.k3"].empirical_constant == pytest.approx(2.0, rel=1e-6)


def test_extremal_item_iii_is_sharp_for_power_solution():
    u = jl_profile()
    reps = {r.item: r for r in check_thm_extremal(u)}
    assert reps["iii"].details["raw_ratio_at_r_min"] == pytest.approx(1.0, abs=1e-3)


def test_degenerate_extremal_normalization():
    reps = check_thm_extremal(constant_profile())
    assert len(reps) == 1 and reps[0].status == "degenerate"


def test_estimas_for_log_solution():
    u = log_profile(10)
    assert infer_flags(u) == {"nonnegative": True, "nondecreasing": True, "convex": True}
    reps = check_thm_estimas(u)
    assert [r.item for r in reps] == ["i", "ii", "iii"]
    assert all(r.status == "pass" and r.holds_uniformly for r in reps)
    grad = math.sqrt(GRAD2_LOG10)
    # beta = 0: |u_r| r, |u_rr| r^2, |u_rrr| r^3 equal 2, 2, 4, so every ratio is constant
    for rep, ck in zip(reps, (2.0, 2.0, 4.0)):
        assert rep.empirical_constant == pytest.approx(ck / grad, rel=1e-6)
        assert np.ptp(rep.trace[3]) / rep.trace[3].max() < 1e-6


def test_monotonicity_laws_for_log_and_power_solutions():
    rep = check_monotonias(log_profile(10))
    assert rep.status == "pass"
    assert rep.details["max_min_ratio"] == pytest.approx(2.0, rel=1e-6)
    rep = check_monotonias(jl_profile())
    assert rep.status == "pass" and all(rep.details[k] for k in ("i", "ii", "iii"))
    assert math.isfinite(rep.empirical_constant)


def test_monotonicity_laws_on_three_dimensional_branch():
    f = Nonlinearity.exp()
    grid = RadialGrid.geometric(2000, 1e-6)
    lam_half = 0.5 * 3.3219921
    a = brentq(lambda x: solve_lambda(f, 3, x, grid) - lam_half, 0.2, 0.6, xtol=1e-12)
    res = shoot(f, 3, solve_lambda(f, 3, a, grid), a, grid)
    rep = check_monotonias(res.profile)
    assert rep.status == "pass"


def test_unstable_dimension_skips_conclusions():
    u = log_profile(9)
    for rep in (check_lemma_essential(u), check_rand2r(u), check_thm_principal(u)):
        assert rep.status == "skipped"
        assert not rep.hypotheses["semistable"]
        assert "semistable" in rep.reason


@pytest.mark.parametrize("c", [0.3, 7.0])
def test_constants_are_homogeneous(c):
    base, scaled = log_profile(12), log_profile(12, c=2.0 * c)
    for check in (check_lemma_essential, check_rand2r):
        assert check(scaled).empirical_constant == pytest.approx(check(base).empirical_constant, rel=1e-9)


def test_refinement_trend_is_small_on_closed_forms():
    rep = check_lemma_essential(log_profile(10))
    assert "relative change" in rep.refinement_trend


def test_report_serialization_and_trace():
    rep = check_lemma_essential(log_profile(10))
    d = rep.to_dict()
    for key in ("theorem_id", "regime", "empirical_constant", "sup_location", "holds_uniformly",
                "slope_at_origin", "grid_meta", "hypotheses"):
        assert key in d
    assert d["regime"] == "N=10"
    assert rep.trace_csv().splitlines()[0] == "r,lhs,rhs,ratio"


def test_verify_all_on_log_solution():
    reps = verify_all(log_profile(12))
    assert {r.theorem_id for r in reps} == {"lemma_essential", "prop_rand2r", "thm_principal",
                                            "thm_estimas", "lemma_monotonias"}
    assert all(r.status == "pass" for r in reps)


def test_derivative_bound_fails_on_corollary_counterexample():
    """Targets |u_r(r_n)| >= n r_n^{beta-1}: no fixed multiple of r^{beta-1} bounds u_r."""
    n = 10
    radii = np.array([1.0 / (k + 1.0) for k in range(1, 41)])
    mags = np.arange(1, 41) * radii ** (growth_exponent(n) - 1.0)
    res = counterexample_first(CounterexampleTarget(tuple(radii), tuple(mags), 1), dim=n)
    assert res.ok
    reps = {r.item: r for r in check_thm_estimas(res.u)}
    item = reps["i"]
    assert not item.holds_uniformly
    assert item.status == "skipped" and not item.hypotheses["nonnegative"]
    assert item.hypotheses["semistable"]
    assert item.slope_at_origin < -0.05
