"""Convex conjugates, Monge-Ampere measures and functional affine surface areas."""

__version__ = "0.1.0"

from .convex_core import (  # noqa: F401
    Ball,
    DomainPolytope,
    GridSpec,
    MaxAffineFunction,
    SampledConvexFunction,
    SmoothConvexSpec,
    lipschitz_constant,
    sample,
    validate_convexity,
)
from .errors import *  # noqa: F401,F403
