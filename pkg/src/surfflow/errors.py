"""Exception types raised across the package."""


class SurfflowError(Exception):
    """Base class for all package errors."""


class FewNeighbors(SurfflowError):
    """A point has too few neighbors to build a stencil."""

    def __init__(self, index, count, minimum):
        super().__init__(
            f"point {index} has {count} neighbors, need at least {minimum}"
        )
        self.index = index
        self.count = count
        self.minimum = minimum


class OrientationFailure(SurfflowError):
    """Normal orientation could not be propagated to every point."""


class DegenerateProjection(SurfflowError):
    """Projected neighborhood is collinear; no tessellation exists."""


class SingularStencil(SurfflowError):
    """Stencil constraint matrix is rank deficient, even at reduced order."""


class NoReference(SurfflowError):
    """No reference point close enough for a surface projection."""


class NoConvergence(SurfflowError):
    """Iterative solver failed to reach the requested residual."""

    def __init__(self, residual, iterations):
        super().__init__(
            f"no convergence: residual {residual:.3e} after {iterations} iterations"
        )
        self.residual = residual
        self.iterations = iterations


class Breakdown(SurfflowError):
    """BiCGSTAB scalar underflow (rho or omega vanished)."""


class EmptyRow(SurfflowError):
    """A sparse system row received no entries."""


class MissingBoundaryData(SurfflowError):
    """A boundary row requires data the scenario did not provide."""


class UnknownScenario(SurfflowError):
    """Benchmark scenario name not in the catalog."""


class ParseError(SurfflowError):
    """Config file could not be parsed."""

    def __init__(self, message, line=None):
        loc = f" (line {line})" if line is not None else ""
        super().__init__(f"{message}{loc}")
        self.line = line
