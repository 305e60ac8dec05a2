"""Exception types shared across the package."""


class GlvortexError(Exception):
    """Base class for all package errors."""


class InvalidGrid(GlvortexError):
    """Grid parameters out of the supported range."""


class NonConvergence(GlvortexError):
    """Newton iteration failed to reach the requested tolerance."""


class OutOfRange(GlvortexError):
    """Evaluation point outside the stored sample range."""


class OutsideTube(GlvortexError):
    """Point violates the injectivity bound of the Fermi coordinates."""


class SingularTube(GlvortexError):
    """Normal offset reaches a focal point (det(I - z^g A_g) <= 0)."""


class EigenFailure(GlvortexError):
    """Sparse eigensolver failed to converge."""


class SolverFailure(GlvortexError):
    """Linear or projected solve failed."""


class DecayViolation(GlvortexError):
    """Right-hand side does not satisfy the required decay class."""


class MeanNotZero(GlvortexError):
    """Right-hand side of a mean-zero Laplace problem has nonzero mean."""


class UnbalancedLambda(GlvortexError):
    """End coefficients do not sum to zero."""


class OnBranchLocus(GlvortexError):
    """Evaluation on the zero set of the pure-gauge phase."""


class StencilOutsideDomain(GlvortexError):
    """Finite-difference stencil leaves the evaluator's domain."""
