"""Discrete exterior calculus toolkit for linearization obstructions."""

__version__ = "0.1.0"
