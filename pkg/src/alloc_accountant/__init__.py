"""Privacy accounting for random allocation of the Gaussian mechanism."""

from .accountant import (
    BoundResult,
    Method,
    MethodOutcome,
    NoBoundAvailable,
    Scheme,
    SchemeSpec,
    delta,
    epsilon,
    multi_alloc_reduce,
)
from .core_dp import Delta, Direction, gaussian_delta, gaussian_epsilon

__all__ = [
    "BoundResult",
    "Delta",
    "Direction",
    "Method",
    "MethodOutcome",
    "NoBoundAvailable",
    "Scheme",
    "SchemeSpec",
    "delta",
    "epsilon",
    "gaussian_delta",
    "gaussian_epsilon",
    "multi_alloc_reduce",
]
