import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semistable.core import (RadialGrid, RadialProfile, annulus_norms, cumulative_quadrature,
                             differentiate, growth_exponent, jl_exponent, quadrature)
from semistable.estimates import check_lemma_essential, check_rand2r, check_thm_principal
from semistable.family import (CounterexampleTarget, FamilySpec, build_family, fields,
                               random_seed, verify_family_semistability)
from semistable.stability import (LinearizedOperator, first_eigenvalue, radial_form_test,
                                  random_eta_suite)

GRID = RadialGrid.geometric(600, 1e-6)
FINE = RadialGrid.geometric(2000, 1e-6)

dims = st.integers(min_value=3, max_value=20)
coeffs = st.lists(st.floats(-3.0, 3.0, allow_nan=False), min_size=1, max_size=4)


def log_profile(n, grid, c=2.0):
    r = grid.nodes
    return RadialProfile(grid, -c * np.log(r), n, -c / r, c / r**2, -2 * c / r**3,
                         {"decreasing": True})


def sine_series(a, r):
    return sum(c * np.sin((k + 1) * r) for k, c in enumerate(a))


@given(dims, st.floats(-20.0, 20.0, allow_nan=False))
def test_constant_shift_law(n, c):
    op = LinearizedOperator.from_potential(GRID, n, lambda r: 0.25 * (n - 2.0) ** 2 / r**2)
    mu = first_eigenvalue(op).first_eigenvalue
    shifted = first_eigenvalue(op.shifted(c)).first_eigenvalue
    assert shifted == pytest.approx(mu - c, abs=1e-8 * (1.0 + abs(mu) + abs(c)))


@given(dims, st.floats(0.0, 30.0), st.floats(0.0, 30.0), st.floats(0.0, 5.0))
def test_eigenvalue_is_monotone_in_the_potential(n, s, extra, bump):
    r = GRID.nodes
    v1 = s / r**2
    v2 = v1 + extra / r**2 + bump
    mu1 = first_eigenvalue(LinearizedOperator(GRID, v1, n)).first_eigenvalue
    mu2 = first_eigenvalue(LinearizedOperator(GRID, v2, n)).first_eigenvalue
    assert mu2 <= mu1 + 1e-9 * (1.0 + abs(mu1))


@given(coeffs, coeffs, st.floats(-5.0, 5.0), st.floats(0.0, 12.0))
def test_quadrature_is_linear(a, b, alpha, m):
    r = GRID.nodes
    f, g = sine_series(a, r) + 1.0, sine_series(b, r) - 2.0
    lhs = quadrature(f + alpha * g, r, m, lo=1e-3)
    rhs = quadrature(f, r, m, lo=1e-3) + alpha * quadrature(g, r, m, lo=1e-3)
    scale = quadrature(np.abs(f) + abs(alpha) * np.abs(g), r, m, lo=1e-3)
    assert lhs == pytest.approx(rhs, abs=1e-12 * (1.0 + scale))


def dsine_series(a, r):
    return sum(c * (k + 1) * np.cos((k + 1) * r) for k, c in enumerate(a)) + 0.0 * r


@settings(max_examples=15)
@given(coeffs)
def test_differentiating_an_antiderivative_recovers_the_integrand(a):
    errs = []
    for nodes in (800, 1600):
        g = RadialGrid.uniform(nodes, 1e-3)
        r = g.nodes
        phi = sine_series(a, r)
        anti = cumulative_quadrature(phi, r, 0.0, deriv=dsine_series(a, r), tail=False)
        d = differentiate(RadialProfile(g, anti, 3), 1, accuracy=2).values
        errs.append(np.max(np.abs(d - phi)) / (1.0 + np.max(np.abs(phi))))
    assert errs[0] < 1e-4
    assert errs[1] <= 0.5 * errs[0] or errs[1] < 1e-10


@given(st.integers(2, 20), st.floats(1e-6, 0.4), st.integers(50, 1500), coeffs)
def test_annulus_norms_only_read_the_outer_shell(n, r_min, nodes, a):
    def prof(grid):
        r = grid.nodes
        return RadialProfile(grid, 1.0 + sine_series(a, r), n, dsine_series(a, r))

    base = RadialGrid.geometric(1200, 1e-6).merged([[0.5]])
    outer = base.nodes[base.nodes >= 0.5]
    inner = RadialGrid.geometric(nodes, r_min).nodes
    other = RadialGrid(np.concatenate((inner[inner < 0.5], outer)), "spliced")
    x, y = annulus_norms(prof(base)), annulus_norms(prof(other))
    assert x["h1"] == pytest.approx(y["h1"], rel=1e-12, abs=1e-14)


@given(st.integers(11, 60))
def test_growth_exponent_equals_power_scaling(n):
    assert -2.0 / (jl_exponent(n) - 1.0) == pytest.approx(growth_exponent(n), abs=1e-12)


@given(st.integers(10, 40))
def test_derivative_exponent_reaches_minus_one_only_at_ten(n):
    gamma = growth_exponent(n) - 1.0
    assert gamma <= -1.0 + 1e-15
    assert (abs(gamma + 1.0) < 1e-12) == (n == 10)


@given(st.integers(10, 14), st.floats(0.05, 20.0))
def test_constants_are_invariant_under_scaling(n, c):
    base, scaled = log_profile(n, GRID), log_profile(n, GRID, 2.0 * c)
    for check in (check_lemma_essential, check_rand2r, check_thm_principal):
        assert check(scaled).empirical_constant == pytest.approx(check(base).empirical_constant, rel=1e-9)


@settings(max_examples=10)
@given(st.integers(10, 14), st.integers(0, 2**31 - 1))
def test_sampled_forms_agree_with_the_spectrum(n, seed):
    u = log_profile(n, FINE)
    assert first_eigenvalue(LinearizedOperator(FINE, 2.0 * (n - 2.0) / FINE.nodes**2, n)).semistable
    for eta, eta_p in random_eta_suite(FINE.r_min, 4, seed=seed):
        assert radial_form_test(u, eta, eta_p).holds


@settings(max_examples=8)
@given(st.integers(10, 20), st.integers(0, 2**31 - 1))
def test_random_family_members(n, seed):
    spec = FamilySpec(n, random_seed(np.random.default_rng(seed)))
    u = build_family(spec)
    r = u.r
    f = fields(spec, r)
    ident = (n - 1.0) * r ** (n - 3.0) * u.d1**2 - f["dPhi"]
    assert np.max(np.abs(ident) / f["dPhi"]) < 1e-8
    lower = math.sqrt(2.0) * (n - 1.0) ** -0.25 * r ** (growth_exponent(n) - 1.0)
    assert np.all(-u.d1 >= lower * (1.0 - 1e-12))
    assert np.all(u.d1 < 0)
    assert verify_family_semistability(spec, u, count=4, seed=seed).semistable


@given(st.lists(st.floats(1e-4, 1.0), min_size=1, max_size=12, unique=True),
       st.floats(1e-3, 1e3), st.integers(1, 3))
def test_decreasing_targets_are_accepted(radii, mag, order):
    radii = sorted(radii, reverse=True)
    t = CounterexampleTarget(tuple(radii), tuple(mag * (k + 1) for k in range(len(radii))), order)
    assert len(t.radii) == len(t.magnitudes)
    assert all(a > b for a, b in zip(t.radii, t.radii[1:]))
