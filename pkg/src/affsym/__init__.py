"""Equiaffine geometry of 3-dimensional hypersurfaces in R^4 with pointwise symmetry."""

__version__ = "0.1.0"
