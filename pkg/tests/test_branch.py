import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from semistable.branch import (Branch, BracketError, ShootConfig, extremal_profile, shoot,
                               solve_branch, solve_lambda)
from semistable.core import InputError, Nonlinearity, RadialGrid, jl_exponent


def liouville(mu):
    """Closed-form 2D Gelfand solutions: u = 2 log((1+mu)/(1+mu r^2))."""
    return 2.0 * math.log1p(mu), 8.0 * mu / (1.0 + mu) ** 2


@pytest.fixture(scope="module")
def exp3():
    return solve_branch(Nonlinearity.exp(), 3, 10.0, samples=25)


@pytest.fixture(scope="module")
def jl16():
    n = 16
    p = jl_exponent(n)
    al = 2.0 / (p - 1.0)
    return solve_branch(Nonlinearity.power(p), n, 1e6, samples=12), al * (n - 2.0 - al)


def test_zero_lambda_keeps_center_value():
    res = shoot(Nonlinearity.exp(), 5, 0.0, 1.7, RadialGrid.geometric(300, 1e-4))
    assert res.outcome == "ok"
    assert res.boundary_value == 1.7
    assert np.all(res.profile.values == 1.7)


@pytest.mark.parametrize("mu", [0.3, 1.0, 4.0])
def test_shoot_reproduces_liouville_solution(mu):
    a, lam = liouville(mu)
    grid = RadialGrid.geometric(1500, 1e-6)
    res = shoot(Nonlinearity.exp(), 2, lam, a, grid)
    r = grid.nodes
    exact = 2.0 * np.log((1.0 + mu) / (1.0 + mu * r**2))
    assert abs(res.boundary_value) < 1e-8
    assert np.max(np.abs(res.profile.values - exact)) < 1e-8
    assert np.max(np.abs(res.profile.d1 + 4.0 * mu * r / (1.0 + mu * r**2))) < 1e-7


def test_shoot_matches_independent_integrator():
    """N = 2, lambda = 1, a = 0 against scipy's adaptive integrator at tight tolerance."""
    res = shoot(Nonlinearity.exp(), 2, 1.0, 0.0, RadialGrid.geometric(2000, 1e-6))

    def rhs(r, y):
        return [y[1], -y[1] / r - math.exp(y[0])]

    r0 = 1e-4
    y0 = [-r0**2 / 4.0, -r0 / 2.0]
    sol = solve_ivp(rhs, (r0, 1.0), y0, method="DOP853", rtol=1e-12, atol=1e-14)
    assert res.boundary_value == pytest.approx(sol.y[0, -1], abs=1e-8)


def test_blowup_is_an_outcome_not_an_error():
    res = shoot(Nonlinearity.power(3.0), 3, 1e6, 5.0, RadialGrid.geometric(500, 1e-4),
                ShootConfig(ceiling=1e6))
    assert res.outcome == "blowup"
    assert res.profile is None and math.isnan(res.boundary_value)


def test_shoot_rejects_negative_inputs():
    with pytest.raises(InputError):
        shoot(Nonlinearity.exp(), 3, -1.0, 1.0)
    with pytest.raises(InputError):
        shoot(Nonlinearity.exp(), 3, 1.0, -1.0)


@pytest.mark.parametrize("mu", [0.5, 2.0])
def test_solve_lambda_recovers_liouville_parameter(mu):
    a, lam = liouville(mu)
    assert solve_lambda(Nonlinearity.exp(), 2, a, RadialGrid.geometric(1500, 1e-6)) == pytest.approx(lam, rel=1e-8)


def test_solve_lambda_bracket_failure_reports_center_value():
    # f = 0: u stays equal to a > 0, so no lambda reaches u(1) = 0
    f = Nonlinearity.table([0.0, 10.0], [0.0, 0.0], [0.0, 0.0])
    with pytest.raises(BracketError) as err:
        solve_lambda(f, 3, 1.0, RadialGrid.geometric(200, 1e-3))
    assert err.value.a == 1.0


def test_two_dimensional_extremal_parameter():
    br = solve_branch(Nonlinearity.exp(), 2, 10.0, samples=20, eigen=False)
    assert br.turning_detected
    assert br.lambda_star_estimate == pytest.approx(2.0, rel=1e-2)


def test_three_dimensional_turning_point(exp3):
    assert exp3.turning_detected
    assert exp3.lambda_star_estimate == pytest.approx(3.32199, rel=1e-3)
    u = extremal_profile(exp3)
    assert np.all(np.isfinite(u.values)) and np.max(u.values) < 3.0


def test_minimal_branch_is_semistable_and_loses_margin(exp3):
    pts = [p for p in exp3.points if p.on_minimal_branch]
    lam_star = exp3.lambda_star_estimate
    tol = 1e-6 * (1.0 + 3.0 * lam_star)
    # the fold itself is marginal (mu -> 0); the discrete value there is only O(h^2)
    interior = [p for p in pts if p.lam < lam_star * (1.0 - 1e-6)]
    assert all(p.first_eigenvalue >= -tol for p in interior)
    mus = [p.first_eigenvalue for p in interior]
    assert all(a > b for a, b in zip(mus, mus[1:]))
    near = [p for p in interior if p.lam >= 0.9 * lam_star]
    assert near and all(p.first_eigenvalue > 0 for p in near)
    assert abs(pts[-1].first_eigenvalue) < 1e-2


def test_upper_branch_is_unstable(exp3):
    upper = [p for p in exp3.points if not p.on_minimal_branch]
    assert upper and all(p.first_eigenvalue < 0 for p in upper)


def test_minimal_solutions_increase_with_lambda(exp3):
    pts = sorted((p for p in exp3.points if p.on_minimal_branch), key=lambda p: p.lam)
    for lo, hi in zip(pts, pts[1:]):
        # slack is the shooting target |u(1)| <= 1e-9
        assert np.all(lo.profile.values <= hi.profile.values + 2e-9)


def test_branch_profiles_are_decreasing_with_small_residual(exp3):
    for p in exp3.points:
        assert np.all(p.profile.d1 <= 1e-12)
        assert p.residual < 1e-6


def test_power_branch_approaches_explicit_singular_solution(jl16):
    br, lam_exact = jl16
    assert not br.turning_detected
    lams = [p.lam for p in br.points]
    # increasing up to the 1e-9 relative bisection tolerance, where lambda saturates
    assert all(b >= a * (1 - 1e-9) for a, b in zip(lams, lams[1:]))
    assert lams[-1] > lams[0]
    assert br.lambda_star_estimate == pytest.approx(lam_exact, rel=1e-6)
    lo, hi = br.lambda_star_interval
    assert lo <= lam_exact <= hi * (1 + 1e-9)
    assert all(p.first_eigenvalue >= -1e-6 for p in br.points)


def test_power_extremal_profile_close_to_singular_solution(jl16):
    br, _ = jl16
    u = extremal_profile(br)
    p = br.nonlinearity.p
    r = u.r
    sel = (r >= 1e-2) & (r < 1.0)
    exact = r[sel] ** (-2.0 / (p - 1.0)) - 1.0
    assert np.max(np.abs(u.values[sel] - exact) / exact) < 0.02


def test_branch_serialization(exp3):
    d = exp3.to_dict()
    assert {"dimension", "nonlinearity", "points", "lambda_star_estimate", "turning_detected"} <= set(d)
    assert {"a", "lambda", "eigenvalue", "profile_ref"} <= set(d["points"][0])
    assert d["dimension"] == 3
    assert [q["a"] for q in d["points"]] == sorted(q["a"] for q in d["points"])


def test_extremal_profile_needs_points():
    empty = Branch(3, Nonlinearity.exp(), [], math.nan, (math.nan, math.nan), False)
    with pytest.raises(InputError):
        extremal_profile(empty)


def test_solve_branch_rejects_bad_a_max():
    with pytest.raises(InputError):
        solve_branch(Nonlinearity.exp(), 3, 0.0)
