"""Finite-volume solver for the 2D BGK and Boltzmann kinetic equations."""

__version__ = "0.1.0"
