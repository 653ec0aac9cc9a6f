"""Quantum state transfer through weakly coupled ends of arbitrary spin networks."""

__version__ = "0.1.0"
