"""Normalized solutions of coupled radial Gross-Pitaevskii systems."""

__version__ = "0.1.0"
