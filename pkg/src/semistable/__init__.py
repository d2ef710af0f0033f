"""Radial semi-stable solutions of -Delta u = g(u) in the unit ball.

Shooting solvers for the minimal branch of -Delta u = lambda f(u), a radial
stability solver, empirical checks of the pointwise estimates, and an explicit
family of singular semi-stable solutions together with its counterexamples.
"""

__version__ = "0.1.0"

from .core import (ConstructionError, HypothesisError, InputError, Nonlinearity, RadialGrid,
                   RadialProfile, SemistableError, ball_h1_norm, energy_exponent,
                   growth_exponent, jl_exponent, regime, weighted_residual)
from .stability import (LinearizedOperator, StabilityVerdict, eigenfunction, first_eigenvalue,
                        gauge_first_eigenvalue, quadratic_form, radial_form_test)
from .branch import (Branch, BranchPoint, BracketError, ShootConfig, extremal_profile, shoot,
                     solve_branch, solve_lambda)
from .estimates import (THEOREM_IDS, EstimateReport, check_lemma_essential, check_monotonias,
                        check_rand2r, check_thm_estimas, check_thm_extremal, check_thm_principal,
                        potential_from_profile, verify_all, weighted_energy)
from .family import (CounterexampleTarget, FamilySpec, Seed, SeedTerm, build_family,
                     counterexample_first, counterexample_second, counterexample_third,
                     hardy_check, recover_g, verify_family, verify_family_semistability)

__all__ = [
    "__version__",
    "ConstructionError", "HypothesisError", "InputError", "SemistableError", "BracketError",
    "Nonlinearity", "RadialGrid", "RadialProfile", "ball_h1_norm", "energy_exponent",
    "growth_exponent", "jl_exponent", "regime", "weighted_residual",
    "LinearizedOperator", "StabilityVerdict", "eigenfunction", "first_eigenvalue",
    "gauge_first_eigenvalue", "quadratic_form", "radial_form_test",
    "Branch", "BranchPoint", "ShootConfig", "extremal_profile", "shoot", "solve_branch",
    "solve_lambda",
    "THEOREM_IDS", "EstimateReport", "check_lemma_essential", "check_monotonias", "check_rand2r",
    "check_thm_estimas", "check_thm_extremal", "check_thm_principal", "potential_from_profile",
    "verify_all", "weighted_energy",
    "CounterexampleTarget", "FamilySpec", "Seed", "SeedTerm", "build_family",
    "counterexample_first", "counterexample_second", "counterexample_third", "hardy_check",
    "recover_g", "verify_family", "verify_family_semistability",
]
