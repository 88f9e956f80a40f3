"""Solvers for the shallow MHD / magnetic Green-Naghdi model hierarchy."""

from .core import (
    Bathymetry, CFLViolation, ConstraintViolation, DepthTooSmall, DimensionalScales, Grid1D,
    Grid2D, MHDGNError, ModelParams, NonPositiveScale, SurfaceState1D, SurfaceState2D,
    constraint_norm, depth, energy, mass, nondimensionalize, redimensionalize,
)

__version__ = "0.1.0"
