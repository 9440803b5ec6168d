"""Reconstruction of manifolds from truncated, noisy boundary spectral data."""

__version__ = "0.1.0"
