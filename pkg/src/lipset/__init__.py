"""Numerical tools for Lipschitz set-valued maps on Lipschitz manifolds."""

__version__ = "0.1.0"
