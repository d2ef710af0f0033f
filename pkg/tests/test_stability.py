import math

import numpy as np
import pytest
from scipy.optimize import brentq
from scipy.special import j0, j1, y0, y1

from semistable.core import InputError, RadialGrid, RadialProfile, jl_exponent
from semistable.family import Seed, FamilySpec, build_family
from semistable.stability import (LinearizedOperator, eigenfunction, first_eigenvalue,
                                  gauge_first_eigenvalue, paper_eta, quadratic_form,
                                  radial_form_test, random_eta_suite)


def log_profile(n, grid):
    r = grid.nodes
    return RadialProfile(grid, -2.0 * np.log(r), n, -2.0 / r, 2.0 / r**2, -4.0 / r**3,
                         {"decreasing": True})


def critical_op(n, nodes=2000, r_min=1e-6):
    g = RadialGrid.geometric(nodes, r_min)
    return LinearizedOperator.from_potential(g, n, lambda r: 2.0 * (n - 2.0) / r**2)


def bessel_robin_mu(r0, k):
    """Lowest mu for psi = J0(s r) + c Y0(s r) with psi(1) = 0 and r0 psi' = k psi.

    This is the exact continuum problem for V = (N-2)^2 / (4 r^2) in the
    variable psi = r^k phi, so it is an oracle independent of the discretization.
    """
    def robin(s, f, f1):
        return -r0 * s * f1(s * r0) - k * f(s * r0)

    def mismatch(s):
        # y0(s) psi_J - j0(s) psi_Y vanishes at r = 1; cross-multiplied to avoid poles
        return y0(s) * robin(s, j0, j1) - j0(s) * robin(s, y0, y1)

    grid = np.linspace(0.5, 4.0, 700)
    vals = [mismatch(s) for s in grid]
    for a, b, fa, fb in zip(grid[:-1], grid[1:], vals[:-1], vals[1:]):
        if np.isfinite(fa) and np.isfinite(fb) and fa * fb < 0:
            return brentq(mismatch, a, b, xtol=1e-15) ** 2
    raise AssertionError("no root bracketed")


def test_critical_potential_matches_bessel_robin_oracle():
    mu_exact = bessel_robin_mu(1e-6, 4.0)
    assert mu_exact == pytest.approx(6.35419, rel=1e-5)
    mu = first_eigenvalue(critical_op(10, 4000)).first_eigenvalue
    assert mu == pytest.approx(mu_exact, rel=1e-5)


def test_free_laplacian_converges_to_pi_squared():
    g = RadialGrid.geometric(3000, 1e-6)
    v = first_eigenvalue(LinearizedOperator.from_potential(g, 3, 0.0))
    assert v.first_eigenvalue == pytest.approx(math.pi**2, rel=1e-3)
    assert v.semistable and v.margin == v.first_eigenvalue


@pytest.mark.parametrize("c", [1.0, -1.0, 3.5])
def test_constant_shift_moves_mu_by_minus_c(c):
    op = critical_op(12, 800)
    mu = first_eigenvalue(op).first_eigenvalue
    assert first_eigenvalue(op.shifted(c)).first_eigenvalue == pytest.approx(mu - c, abs=1e-8 * (1 + abs(mu)))


def test_mu_decreases_when_potential_grows():
    g = RadialGrid.geometric(800, 1e-6)
    mus = [first_eigenvalue(LinearizedOperator.from_potential(g, 11, lambda r, s=s: s / r**2))
           .first_eigenvalue for s in (0.0, 5.0, 10.0, 18.0)]
    assert all(a > b for a, b in zip(mus, mus[1:]))


def test_eigenfunction_normalization():
    op = critical_op(11, 600)
    phi = eigenfunction(op)
    assert phi.size == op.grid.size
    assert phi[-1] == 0.0
    assert np.max(phi) == pytest.approx(1.0)
    assert np.all(phi[:-1] > 0.0)


def test_subcritical_dimension_is_unstable_and_flagged():
    v = first_eigenvalue(critical_op(9))
    assert v.first_eigenvalue < -1e-2
    assert not v.semistable


def test_operator_rejects_bad_potential():
    g = RadialGrid.geometric(50, 1e-3)
    with pytest.raises(InputError):
        LinearizedOperator(g, np.zeros(49), 3)
    bad = np.zeros(50)
    bad[3] = np.inf
    with pytest.raises(InputError):
        LinearizedOperator(g, bad, 3)


def test_verdict_dict_keys():
    d = first_eigenvalue(critical_op(10, 300)).to_dict()
    for key in ("mu1", "semistable", "margin", "grid_size", "r_min", "method"):
        assert key in d


def test_quadratic_form_closed_form_in_three_dimensions():
    g = RadialGrid.geometric(4000, 1e-6)
    r = g.nodes
    u = RadialProfile(g, np.zeros_like(r), 3)
    v = RadialProfile(g, r**2 - r**3, 3)
    for c in (0.0, 2.0, -7.0):
        exact = 4.0 * math.pi * (3.0 / 35.0 - c / 252.0)
        assert quadratic_form(u, c, v) == pytest.approx(exact, rel=3e-4)
    errs = []
    for m in (2000, 4000):
        gm = RadialGrid.geometric(m, 1e-6)
        rm = gm.nodes
        val = quadratic_form(RadialProfile(gm, 0 * rm, 3), 0.0, RadialProfile(gm, rm**2 - rm**3, 3))
        errs.append(abs(val - 12.0 * math.pi / 35.0))
    assert math.log2(errs[0] / errs[1]) > 1.9


def test_quadratic_form_zero_potential_is_positive_and_needs_compact_support():
    g = RadialGrid.geometric(500, 1e-4)
    r = g.nodes
    u = RadialProfile(g, np.zeros_like(r), 5)
    assert quadratic_form(u, 0.0, RadialProfile(g, np.sin(math.pi * r) * r**2, 5)) > 0
    with pytest.raises(InputError):
        quadratic_form(u, 0.0, RadialProfile(g, 1.0 - r, 5))


def test_radial_form_trivial_eta():
    u = log_profile(10, RadialGrid.geometric(400, 1e-6))
    res = radial_form_test(u, lambda t: 0.0 * t, lambda t: 0.0 * t)
    assert res.lhs == 0.0 and res.rhs == 0.0 and res.holds


def test_cutoff_eta_separates_stable_and_unstable_log_solutions():
    g = RadialGrid.geometric(2000, 1e-6)
    assert not radial_form_test(log_profile(9, g), *paper_eta(9, 1e-3)).holds
    for n in (10, 12):
        assert radial_form_test(log_profile(n, g), *paper_eta(n, 1e-3)).holds


def test_form_sampling_consistent_with_spectrum():
    g = RadialGrid.geometric(1500, 1e-6)
    u = log_profile(11, g)
    assert first_eigenvalue(LinearizedOperator.from_potential(g, 11, 18.0 / g.nodes**2)).semistable
    for eta, eta_p in random_eta_suite(g.r_min, 10, seed=3):
        assert radial_form_test(u, eta, eta_p).holds


def test_gauge_and_generic_schemes_agree():
    g = RadialGrid.geometric(2000, 1e-6)
    for n in (10, 12):
        u = log_profile(n, g)
        generic = first_eigenvalue(LinearizedOperator.from_potential(g, n, 2.0 * (n - 2.0) / g.nodes**2))
        assert gauge_first_eigenvalue(u).first_eigenvalue == pytest.approx(generic.first_eigenvalue, rel=1e-4)
    n = 16
    p = jl_exponent(n)
    al = 2.0 / (p - 1.0)
    r = g.nodes
    u = RadialProfile(g, r**-al - 1.0, n, -al * r ** (-al - 1.0), al * (al + 1.0) * r ** (-al - 2.0))
    lam = al * (n - 2.0 - al)
    generic = first_eigenvalue(LinearizedOperator(g, lam * p * (1.0 + u.values) ** (p - 1.0), n))
    assert gauge_first_eigenvalue(u).first_eigenvalue == pytest.approx(generic.first_eigenvalue, rel=1e-4)


def test_gauge_scheme_on_steep_family_member():
    spec = FamilySpec(10, Seed.bumps([1e6], [1.0 / 21.0], [0.01]))
    v = gauge_first_eigenvalue(build_family(spec))
    assert v.semistable and v.first_eigenvalue > 0.0
    assert v.details["form"] == "gauge"


def test_gauge_requires_strictly_decreasing_profile():
    g = RadialGrid.geometric(200, 1e-4)
    r = g.nodes
    u = RadialProfile(g, r**2 - 1, 10, 2 * r, 2 * np.ones_like(r))
    with pytest.raises(InputError):
        gauge_first_eigenvalue(u)
