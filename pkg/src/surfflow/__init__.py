"""Meshfree Lagrangian simulation of incompressible flow on surfaces.

The package discretizes the surface Navier-Stokes equations on moving
point clouds with generalized finite differences: local stencils built
in tangent planes provide surface gradient, divergence, and
Laplace-Beltrami operators; a Chorin-style projection scheme advances
the flow; and merge/insert regularization keeps evolving clouds (free
boundaries, moving surfaces) well sampled.
"""

from .cloud import Label, PointCloud
from .config import RunConfig, parse_config
from .errors import (Breakdown, DegenerateProjection, EmptyRow, FewNeighbors,
                     MissingBoundaryData, NoConvergence, NoReference,
                     OrientationFailure, ParseError, SingularStencil,
                     SurfflowError, UnknownScenario)
from .operators import StencilSet, projector
from .solver import BoundaryData, FluidParams, StepReport, time_step
from .sparse import SparseSystem, solve_bicgstab
from .tessellation import build_geometry, detect_free_boundary, detect_holes
from .transport import (DualCloud, MotionState, advance_positions,
                        fluid_move_delta, regularize, surface_move_delta)

__version__ = "0.1.0"

__all__ = [
    "Label", "PointCloud", "RunConfig", "parse_config",
    "SurfflowError", "FewNeighbors", "OrientationFailure",
    "DegenerateProjection", "SingularStencil", "NoReference",
    "NoConvergence", "Breakdown", "EmptyRow", "MissingBoundaryData",
    "UnknownScenario", "ParseError",
    "StencilSet", "projector",
    "BoundaryData", "FluidParams", "StepReport", "time_step",
    "SparseSystem", "solve_bicgstab",
    "build_geometry", "detect_free_boundary", "detect_holes",
    "DualCloud", "MotionState", "advance_positions", "fluid_move_delta",
    "surface_move_delta", "regularize",
    "__version__",
]
