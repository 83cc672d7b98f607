"""Perturbed lattice random walks and their skew stable scaling limits."""

__version__ = "0.1.0"
