"""Heat trace asymptotics of isotropic stable processes killed on leaving a domain."""

__version__ = "0.1.0"

from .errors import (
    BudgetExceededError,
    DomainError,
    FracHeatError,
    InvalidParameterError,
    NumericError,
    SingularityError,
    UnsupportedOperationError,
)
from .kernels import StableParams, free_density, p1_at_zero, transition_density
from .sampler import McEstimate, PathConfig
from .geometry import Ball, Box, DisjointUnion, HalfSpace, Polygon2D, l_shape, unit_disk, unit_square
from .halfspace import estimate_C2, f_profile
from .trace import estimate_trace, extract_second_term, trace_curve, weyl_prefactor
