"""
Energy-Casimir toolkit for spherically symmetric self-gravitating
collisionless systems (units with G = 1).

Modules
-------
casimir     Casimir functions ``Q(f, L)``, their inverses and assumption checks.
steady      Steady states by radial shooting.
functional  Grid densities, energy functionals, distances and inequality checks.
minimize    Projected-gradient minimization of the energy-Casimir functional.
dynamics    Radial shell-code evolution and stability diagnostics.
io, cli     Persistence and the command-line front end.
"""
__version__ = "0.1.0"

from .errors import DomainError, NumericalError, VPCasimirError
from .casimir import CasimirModel, LWeight, alpha, c_alpha, eval_Q, eval_q, validate_assumptions
from .steady import SteadyState, shoot, solve_for_mass
from .functional import GridDensity, eval_J_D, eval_d

__all__ = [
    "__version__",
    "VPCasimirError",
    "DomainError",
    "NumericalError",
    "CasimirModel",
    "LWeight",
    "alpha",
    "c_alpha",
    "eval_Q",
    "eval_q",
    "validate_assumptions",
    "SteadyState",
    "shoot",
    "solve_for_mass",
    "GridDensity",
    "eval_J_D",
    "eval_d",
]
