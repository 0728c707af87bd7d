"""Numerical CFT/SLE toolkit for multiply connected domains."""

__version__ = "0.1.0"
