"""Semi-stability: the quadratic form, its radial reduction, and the first
eigenvalue of -Delta - g'(u) restricted to radial functions."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from . import kernels
from .core import InputError, RadialGrid, RadialProfile, check_dimension, quadrature, sphere_area

PotentialLike = Union[Callable[[np.ndarray], np.ndarray], np.ndarray, float]


@dataclass(frozen=True, eq=False)
class LinearizedOperator:
    """-(t^{N-1} phi')' - t^{N-1} V phi on [r_min, 1]; phi(1) = 0, no flux at r_min."""

    grid: RadialGrid
    potential: np.ndarray
    dim: int

    def __post_init__(self):
        check_dimension(self.dim)
        v = np.ascontiguousarray(self.potential, dtype=float)
        if v.shape != (self.grid.size,):
            raise InputError("potential must be sampled on every grid node")
        if not np.all(np.isfinite(v)):
            raise InputError("potential must be finite on [r_min, 1]")
        object.__setattr__(self, "potential", v)

    @classmethod
    def from_potential(cls, grid: RadialGrid, dim: int, potential: PotentialLike):
        r = grid.nodes
        if callable(potential):
            v = potential(r)
        else:
            v = potential
        return cls(grid, np.broadcast_to(np.asarray(v, dtype=float), r.shape).copy(), dim)

    def shifted(self, c: float) -> "LinearizedOperator":
        return LinearizedOperator(self.grid, self.potential + c, self.dim)

    def potential_scale(self) -> float:
        """max r^2 |V|, the dimensionless size of the potential."""
        r = self.grid.nodes
        return float(np.max(r**2 * np.abs(self.potential)))

    def assemble(self):
        """Symmetric tridiagonal pencil (diag, offdiag, mass, flux, weight) in psi = r^k phi.

        With k = (N-2)/2 the form becomes int t psi'^2 + k psi(r_min)^2
        - int (t^2 V - k^2) psi^2 / t, so the critical Hardy potential is
        represented exactly on any grid.  Unknowns are nodes 0..n-2.
        """
        r = self.grid.nodes
        k = 0.5 * (self.dim - 2.0)
        edges = np.concatenate(([r[0]], 0.5 * (r[1:] + r[:-1]), [1.0]))
        flux = 1.0 / np.log(r[1:] / r[:-1])
        weight = np.log(edges[1:] / edges[:-1])[:-1]
        # lumped mass with the potential's quadrature, so V -> V + c shifts mu by exactly -c
        mass = r[:-1] ** 2 * weight
        q = (r**2 * self.potential)[:-1] - k * k
        diag = flux.copy()
        diag[1:] += flux[:-1]
        diag[0] += k
        diag -= q * weight
        off = -flux[:-1]
        return diag, off, mass, flux, q * weight

    def to_phi(self, psi: np.ndarray) -> np.ndarray:
        r = self.grid.nodes[: psi.size]
        return psi * r ** (-0.5 * (self.dim - 2.0))


@dataclass
class StabilityVerdict:
    first_eigenvalue: float
    semistable: bool
    margin: float
    method: str
    grid_size: int
    r_min: float
    reliable: bool = True
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mu1"] = d.pop("first_eigenvalue")
        return d


def semistability_tolerance(op: LinearizedOperator, tol: float = 1e-6) -> float:
    return tol * (1.0 + op.potential_scale())


def _singularity_flag(op: LinearizedOperator) -> bool:
    r = op.grid.nodes
    k = max(5, r.size // 20)
    q = r[:k] ** 2 * np.abs(op.potential[:k]) + 1e-300
    if q.max() < 1e-8:
        return True
    slope = np.polyfit(np.log(r[:k]), np.log(q), 1)[0]
    return bool(slope > -0.5)


def _lowest_mode(diag, off, mass, flux, pot, boundary, rtol_bisect=1e-14, inverse_steps=4):
    """Lowest eigenpair of the lumped pencil; diag = flux terms + boundary + pot.

    Sturm-sequence bisection isolates mu_1; inverse iteration at that shift
    gives the eigenvector, whose Rayleigh quotient (evaluated in flux form,
    which is well conditioned on graded grids) refines the value.
    """
    sq = np.sqrt(mass)
    d = diag / mass
    e = off / (sq[:-1] * sq[1:])
    mu_b = kernels.smallest_eigenvalue_bisect(d, e, rtol_bisect, 1e-300, 400)
    v = kernels.inverse_iteration(d, e, mu_b - 1e-10 * max(1.0, abs(mu_b)), inverse_steps)
    x = v / sq
    grad = np.diff(np.append(x, 0.0))
    num = float(np.sum(flux * grad**2) + boundary * x[0] ** 2 + np.sum(pot * x**2))
    mu_rq = num / float(np.sum(mass * x**2))
    # the quotient is an upper bound; trust it only when it agrees with bisection
    agree = abs(mu_rq - mu_b) <= 1e-6 * max(1.0, abs(mu_b))
    return (mu_rq if agree else mu_b), mu_b, mu_rq, x


def first_eigenvalue(op: LinearizedOperator, tol: float = 1e-6, rtol_bisect: float = 1e-14,
                     inverse_steps: int = 4) -> StabilityVerdict:
    """Smallest mu of the radial Sturm-Liouville pencil."""
    diag, off, mass, flux, qw = op.assemble()
    k = 0.5 * (op.dim - 2.0)
    mu, mu_b, mu_rq, _ = _lowest_mode(diag, off, mass, flux, -qw, k, rtol_bisect, inverse_steps)
    tolerance = semistability_tolerance(op, tol)
    return StabilityVerdict(
        first_eigenvalue=float(mu),
        semistable=bool(mu >= -tolerance),
        margin=float(mu),
        method="spectral",
        grid_size=op.grid.size,
        r_min=op.grid.r_min,
        reliable=_singularity_flag(op),
        details={"bisection": float(mu_b), "rayleigh": float(mu_rq), "tolerance": tolerance},
    )


def gauge_first_eigenvalue(u: RadialProfile, tol: float = 1e-6) -> StabilityVerdict:
    """mu_1 of -Delta - g'(u) for a radially decreasing solution, without forming g'(u).

    Differentiating the equation gives L u_r = -(N-1) u_r / r^2, and with
    v = u_r t^{-a/2} chi (a = 2 sqrt(N-1)) the radial form becomes

        int t P chi'^2 + (a/2) int P' chi^2 + B chi(r_min)^2,   mass int t P chi^2,

    where P = t^{N-2-a} u_r^2 and B = (a/2) P(r_min) - r_min^{N-1-a} u_r u_rr.
    Only u_r and u_rr enter, so seeds with tall narrow bumps (whose g'(u)
    is huge and nearly cancels) stay well conditioned, and the critical
    Hardy rate of singular solutions is absorbed exactly as in psi = r^k phi.
    """
    r = u.r
    n = u.dim
    a = 2.0 * math.sqrt(n - 1.0)
    ur = u.derivative(1, accuracy=4)
    urr = u.derivative(2, accuracy=4)
    if np.any(ur >= 0.0):
        raise InputError("the gauge form needs u_r < 0 on every node")
    P = r ** (n - 2.0 - a) * ur**2
    dP = r ** (n - 3.0 - a) * ur * ((n - 2.0 - a) * ur + 2.0 * r * urr)
    boundary = 0.5 * a * P[0] - r[0] ** (n - 1.0 - a) * ur[0] * urr[0]
    edges = np.concatenate(([r[0]], 0.5 * (r[1:] + r[:-1]), [1.0]))
    weight = np.log(edges[1:] / edges[:-1])[:-1]
    # int dt / (t P) over a cell with 1/P averaged by the trapezoid rule
    flux = 1.0 / (np.log(r[1:] / r[:-1]) * 0.5 * (1.0 / P[1:] + 1.0 / P[:-1]))
    mass = (r**2 * P)[:-1] * weight
    pot = (0.5 * a * r * dP)[:-1] * weight
    diag = flux.copy()
    diag[1:] += flux[:-1]
    diag[0] += boundary
    diag += pot
    mu, mu_b, mu_rq, _ = _lowest_mode(diag, -flux[:-1], mass, flux, pot, boundary)
    tolerance = tol * (1.0 + float(np.max(np.abs(r * dP / P))))
    return StabilityVerdict(
        first_eigenvalue=float(mu),
        semistable=bool(mu >= -tolerance),
        margin=float(mu),
        method="spectral",
        grid_size=u.grid.size,
        r_min=u.grid.r_min,
        reliable=True,
        details={"bisection": float(mu_b), "rayleigh": float(mu_rq), "tolerance": tolerance,
                 "form": "gauge"},
    )


def eigenfunction(op: LinearizedOperator, mu: Optional[float] = None) -> np.ndarray:
    """Nodal values of the first eigenfunction (positive, max 1, zero at r = 1)."""
    diag, off, mass, _, _ = op.assemble()
    sq = np.sqrt(mass)
    d = diag / mass
    e = off / (sq[:-1] * sq[1:])
    if mu is None:
        mu = kernels.smallest_eigenvalue_bisect(d, e, 1e-14, 1e-300, 400)
    v = kernels.inverse_iteration(d, e, mu - 1e-10 * max(1.0, abs(mu)), 4)
    phi = np.append(op.to_phi(v / sq), 0.0)
    phi /= phi[np.argmax(np.abs(phi))]
    return phi


# --------------------------------------------------------------------------
# quadratic forms


def _samples(fn, r):
    if callable(fn):
        return np.asarray(fn(r), dtype=float) * np.ones_like(r)
    return np.broadcast_to(np.asarray(fn, dtype=float), r.shape)


def quadratic_form(u: RadialProfile, gprime: PotentialLike, v: RadialProfile) -> float:
    """sigma_N int (v_r^2 - g'(u) v^2) t^{N-1} dt for v vanishing at both ends."""
    r = u.r
    if v.grid.size != u.grid.size or not np.array_equal(v.r, r):
        raise InputError("test function must live on the profile's grid")
    vmax = float(np.max(np.abs(v.values)))
    if vmax == 0.0:
        return 0.0
    if abs(v.values[0]) > 1e-10 * vmax or abs(v.values[-1]) > 1e-10 * vmax:
        raise InputError("test function must vanish at both ends of its support")
    vr = v.derivative(1, accuracy=4)
    pot = _samples(gprime, r)
    n = u.dim
    return sphere_area(n) * quadrature(vr**2 - pot * v.values**2, r, n - 1, lo=r[0])


@dataclass
class FormTest:
    lhs: float
    rhs: float
    holds: bool


def radial_form_test(u: RadialProfile, eta: Callable, eta_prime: Optional[Callable] = None,
                     eps: float = 1e-8) -> FormTest:
    """(N-1) int u_r^2 eta^2 t^{N-1} <= int u_r^2 ((t eta)')^2 t^{N-1}."""
    r = u.r
    n = u.dim
    ur = u.derivative(1)
    eta_v = _samples(eta, r)
    if eta_prime is None:
        tmp = RadialProfile(u.grid, r * eta_v, n)
        teta_p = tmp.derivative(1, accuracy=4)
    else:
        teta_p = eta_v + r * _samples(eta_prime, r)
    if not (np.all(np.isfinite(eta_v)) and np.all(np.isfinite(teta_p))):
        raise InputError("eta and (t eta)' must be bounded on the grid")
    bound = 1e12 * (1.0 + float(np.max(np.abs(eta_v))))
    if np.max(np.abs(teta_p)) > bound:
        raise InputError("(t eta)' is unbounded on the grid")
    lhs = (n - 1) * quadrature(ur**2 * eta_v**2, r, n - 1, lo=r[0])
    rhs = quadrature(ur**2 * teta_p**2, r, n - 1, lo=r[0])
    slack = eps * max(abs(lhs), abs(rhs), 1e-300)
    return FormTest(float(lhs), float(rhs), bool(lhs <= rhs + slack))


def paper_eta(n: int, r0: float):
    """The cut-off test function used for the weighted energy bound.

    Constant r0^{-sqrt(N-1)-1} on [0, r0], t^{-sqrt(N-1)-1} up to 1/2, then a
    linear ramp down to zero at t = 1. Returns (eta, eta').
    """
    k = math.sqrt(n - 1.0) + 1.0
    c = 2.0 ** (k + 1.0)

    def eta(t):
        t = np.asarray(t, dtype=float)
        return np.where(t <= r0, r0**-k, np.where(t <= 0.5, t**-k, c * (1.0 - t)))

    def eta_p(t):
        t = np.asarray(t, dtype=float)
        return np.where(t <= r0, 0.0, np.where(t <= 0.5, -k * t ** (-k - 1.0), -c))

    return eta, eta_p


def random_eta_suite(r_min: float, count: int, seed: int):
    """Smooth bumps in log r, compactly supported inside (r_min, 1)."""
    rng = np.random.default_rng(seed)
    lo = math.log(r_min)
    suite = []
    for _ in range(count):
        width = rng.uniform(0.3, 0.45) * (-lo)
        center = rng.uniform(lo + width, -width)
        height = rng.uniform(0.5, 2.0)

        def eta(t, c=center, w=width, h=height):
            x = (np.log(t) - c) / w
            return h * np.where(np.abs(x) < 1.0, (1.0 - x**2) ** 4, 0.0)

        def eta_p(t, c=center, w=width, h=height):
            x = (np.log(t) - c) / w
            return h * np.where(np.abs(x) < 1.0, -8.0 * x * (1.0 - x**2) ** 3, 0.0) / (w * t)

        suite.append((eta, eta_p))
    return suite
