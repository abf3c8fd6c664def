"""Invariants, volumes and integer-point counts for decomposable forms."""

__version__ = "0.1.0"
