"""Numerical kernel for null hypersurfaces in warped-product and static spacetimes."""

__version__ = "0.1.0"
