"""Exception hierarchy shared by all modules."""


class PolytoriError(Exception):
    """Base class for every error raised by the package."""


class InvariantError(PolytoriError, ValueError):
    """An input object violates one of its declared invariants."""


class SeriesDivergenceError(PolytoriError, ArithmeticError):
    """A q-series did not converge (|q| >= 1 or the term cap was reached)."""


class LatticeProximityError(PolytoriError, ValueError):
    """Evaluation point is within the exclusion radius of a lattice point or a singularity."""


class ContinuationError(PolytoriError, RuntimeError):
    """Branch tracking of sqrt(w) became ambiguous near a branch point."""


class GeometryError(PolytoriError, RuntimeError):
    """Cycle routing failed (points too clustered, cuts intersect, ...)."""


class QuadratureError(PolytoriError, RuntimeError):
    """Adaptive quadrature exceeded its refinement cap."""


class EigensolverError(PolytoriError, RuntimeError):
    """The sparse eigensolver failed to converge or the mesh is unusable."""
