"""Numerical laboratory for glued SU(2) monopoles."""

__version__ = "0.1.0"
