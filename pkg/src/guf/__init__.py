"""Geometric unscented sampling and sigma-point Gaussian filters."""

__version__ = "0.1.0"

from .filters import (
    CubatureRule,
    FifthDegreeCubatureRule,
    GaussHermiteRule,
    GeometricRule,
    StateSpaceModel,
    UnscentedRule,
    kalman_reference,
    run_filter,
)
from .gus_sampler import GaussianBelief, SigmaSet, build_sigma_set, importance_levels, resolve_radii
from .sphere_designs import canonicalize, expand_orbit, layered_design, reference_sampling

__all__ = [
    "CubatureRule",
    "FifthDegreeCubatureRule",
    "GaussHermiteRule",
    "GaussianBelief",
    "GeometricRule",
    "SigmaSet",
    "StateSpaceModel",
    "UnscentedRule",
    "build_sigma_set",
    "canonicalize",
    "expand_orbit",
    "importance_levels",
    "kalman_reference",
    "layered_design",
    "reference_sampling",
    "resolve_radii",
    "run_filter",
]
