"""curvednbody: n-body dynamics on constant-curvature surfaces.

Simulation and verification tools for the cotangent-potential n-body problem
on spheres and hyperboloids: geometric primitives, equations of motion, an
adaptive embedded-pair integrator with singularity events, pair-proximity
classification, and ball-projection diagnostics (inertia, angular momentum
bounds, planarity, projected-system equivalence).

Hot kernels run in a compiled extension when available, with a pure-numpy
fallback selected at import (see curvednbody.backend).
"""

from .backend import backend_name
from .geometry import CurvatureSpace
from .dynamics import SystemState

__version__ = "0.1.0"

__all__ = ["CurvatureSpace", "SystemState", "backend_name", "__version__"]
