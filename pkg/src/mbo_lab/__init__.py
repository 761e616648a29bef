"""Numerical laboratory for the modified Benjamin-Ono equation."""

__version__ = "0.1.0"
