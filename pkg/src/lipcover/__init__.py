"""Lipschitz-continuous randomized algorithms for covering problems."""

__version__ = "0.1.0"
