"""Numerical laboratory for semilinear wave equations with null-form nonlinearities in spherical symmetry."""

__version__ = "0.1.0"
