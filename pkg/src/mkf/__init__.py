"""Moment-based Kalman filtering with exact mixed trigonometric-polynomial moments."""

__version__ = "0.1.0"

from .distributions import Exponential, Gaussian, MomentSpec1D, Uniform, mixed_moment_1d
from .expand import MomentEngine, RandomVectorSpec, expectation
from .expr import flatten, parse
from .filters import (
    ExtendedKalmanFilter,
    GaussianBelief,
    MomentKalmanFilter,
    StateSpaceModel,
    UnscentedKalmanFilter,
    make_filter,
)
from .montecarlo import mc_expectation

__all__ = [
    "__version__",
    "Exponential",
    "Gaussian",
    "Uniform",
    "MomentSpec1D",
    "mixed_moment_1d",
    "MomentEngine",
    "RandomVectorSpec",
    "expectation",
    "flatten",
    "parse",
    "ExtendedKalmanFilter",
    "GaussianBelief",
    "MomentKalmanFilter",
    "StateSpaceModel",
    "UnscentedKalmanFilter",
    "make_filter",
    "mc_expectation",
]
