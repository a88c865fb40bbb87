"""Numerical laboratory for nearly-integrable two-degree-of-freedom mechanical systems."""
__version__ = "0.1.0"
