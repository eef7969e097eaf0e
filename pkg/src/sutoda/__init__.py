"""Numerical toolkit for the singular SU(3) Toda system on the sphere and disk."""

__version__ = "0.1.0"
