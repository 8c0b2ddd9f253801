"""Numerical laboratory for the supercooled Stefan problem."""

__version__ = "0.1.0"
