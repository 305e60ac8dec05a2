"""Numerical toolkit for vortex concentration of the 4D magnetic
Ginzburg-Landau system on tubes around minimal surfaces.

Subpackages cover the radial vortex profile, embedded-surface geometry,
Fermi coordinates and curvature expansions, approximate-solution assembly
with residual scans, the 2D gauge-orthogonal linearized operator, and the
codimension-2 Jacobi solvability machinery.
"""

from . import errors
from .profile import RadialProfile, solve_profile, profile_eval, ode_residual

__all__ = [
    "errors",
    "RadialProfile",
    "solve_profile",
    "profile_eval",
    "ode_residual",
]

__version__ = "0.1.0"
