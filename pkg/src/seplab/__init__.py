"""Numerical laboratory for decohered stabilizer and free-fermion states."""

__version__ = "0.1.0"
