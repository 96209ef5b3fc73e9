"""Numerical toolkit for anisotropic isoperimetry, Legendre conjugates and transport remainders."""

__version__ = "0.1.0"
