"""Bondi energy-momentum: characteristic evolution, hyperbolic slices and Jang graphs."""

__version__ = "0.1.0"
