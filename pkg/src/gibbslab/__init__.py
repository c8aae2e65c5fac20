"""Finite-volume Gibbs measures of disordered lattice spin models."""

__version__ = "0.1.0"
