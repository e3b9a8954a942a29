"""Exact and approximate null distributions of linear rank statistics."""

__version__ = "0.1.0"
