"""Numerical laboratory for Szegő kernels of positive line bundles."""

__version__ = "0.1.0"
