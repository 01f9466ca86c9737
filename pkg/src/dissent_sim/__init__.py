"""Numerics for dissipatively driven steady-state entanglement of two atomic ensembles."""

__version__ = "0.1.0"
