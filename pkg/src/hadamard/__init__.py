"""Numerical geometry of Hadamard spaces: metrics, means, orbits and flows."""
__version__ = "0.1.0"

from .geometry import (
    GeometryError,
    Point,
    SpaceDescriptor,
    TangentVector,
    UnsupportedOperation,
    cat0_residual,
    cauchy_schwarz_slack,
    distance,
    euclidean,
    exp_map,
    geodesic_point,
    hyperbolic,
    log_map,
    quasilin,
    spd,
    spider,
)
from .frechet import SolverConfig, WeightedPoints, karcher_mean
from .maps import apply, orbit

__all__ = [
    "GeometryError",
    "Point",
    "SolverConfig",
    "SpaceDescriptor",
    "TangentVector",
    "UnsupportedOperation",
    "WeightedPoints",
    "apply",
    "cat0_residual",
    "cauchy_schwarz_slack",
    "distance",
    "euclidean",
    "exp_map",
    "geodesic_point",
    "hyperbolic",
    "karcher_mean",
    "log_map",
    "orbit",
    "quasilin",
    "spd",
    "spider",
    "__version__",
]
